//! Element taxonomy (category → attribute → attribute value) and
//! child-to-parent message passing over element embeddings.
//!
//! For every parent `i` with children `N_i`, one pass computes
//! `m_i = Σ_{j∈N_i} w_j · f_j` and sets `f_i ← f_i + m_i`. Two passes run
//! bottom-up: attribute values into attributes, then attributes (already
//! updated) into categories.

use std::collections::HashMap;

use thiserror::Error;

use crate::corpus::{ElementKind, FashionElement};
use crate::gradkernel::{GradError, Graph, NodeId, ScatterEdge, Tensor};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TaxonomyError {
    #[error("unknown element `{0}`")]
    UnknownElement(String),
    #[error("element `{child}` has more than one parent (`{first}`, `{second}`)")]
    MultipleParents {
        child: String,
        first: String,
        second: String,
    },
    #[error("cycle through element `{0}`")]
    Cycle(String),
    #[error("illegal edge {parent} ({parent_kind}) -> {child} ({child_kind})")]
    IllegalEdge {
        parent: String,
        child: String,
        parent_kind: ElementKind,
        child_kind: ElementKind,
    },
    #[error("embedding dimension mismatch: expected {expected}, found {found} for node {node}")]
    DimensionMismatch {
        node: usize,
        expected: usize,
        found: usize,
    },
    #[error("expected {expected} embeddings, found {found}")]
    EmbeddingCount { expected: usize, found: usize },
    #[error(transparent)]
    Grad(#[from] GradError),
}

/// Validated forest over corpus elements.
#[derive(Debug, Clone, PartialEq)]
pub struct Taxonomy {
    names: Vec<String>,
    kinds: Vec<ElementKind>,
    /// `(parent, edge index)` per node.
    parent: Vec<Option<(usize, usize)>>,
    /// `(child, edge index)` per node, children ordered by name.
    children: Vec<Vec<(usize, usize)>>,
    /// `(parent, child)` per edge index.
    edges: Vec<(usize, usize)>,
}

fn legal(parent: ElementKind, child: ElementKind) -> bool {
    matches!(
        (parent, child),
        (ElementKind::Category, ElementKind::Attribute)
            | (ElementKind::Attribute, ElementKind::AttributeValue)
    )
}

/// Validates `(parent_name, child_name)` edges against the element set.
///
/// Checks run in order: unknown names, multiple parents, cycles, then
/// kind compatibility.
pub fn build_taxonomy(
    edges: &[(String, String)],
    elements: &[FashionElement],
) -> Result<Taxonomy, TaxonomyError> {
    let index: HashMap<&str, usize> = elements
        .iter()
        .enumerate()
        .map(|(i, e)| (e.name.as_str(), i))
        .collect();
    let n = elements.len();
    let lookup = |name: &str| {
        index
            .get(name)
            .copied()
            .ok_or_else(|| TaxonomyError::UnknownElement(name.to_string()))
    };
    let mut resolved = Vec::with_capacity(edges.len());
    let mut parent_of: Vec<Option<usize>> = vec![None; n];
    for (p, c) in edges {
        let (pi, ci) = (lookup(p)?, lookup(c)?);
        if let Some(existing) = parent_of[ci] {
            return Err(TaxonomyError::MultipleParents {
                child: c.clone(),
                first: elements[existing].name.clone(),
                second: p.clone(),
            });
        }
        parent_of[ci] = Some(pi);
        resolved.push((pi, ci));
    }
    for start in 0..n {
        let mut cur = start;
        for _ in 0..=n {
            match parent_of[cur] {
                Some(p) if p == start => {
                    return Err(TaxonomyError::Cycle(elements[start].name.clone()))
                }
                Some(p) => cur = p,
                None => break,
            }
        }
    }
    for &(pi, ci) in &resolved {
        let (pk, ck) = (elements[pi].kind, elements[ci].kind);
        if !legal(pk, ck) {
            return Err(TaxonomyError::IllegalEdge {
                parent: elements[pi].name.clone(),
                child: elements[ci].name.clone(),
                parent_kind: pk,
                child_kind: ck,
            });
        }
    }
    resolved.sort_by(|a, b| {
        a.0.cmp(&b.0)
            .then_with(|| elements[a.1].name.cmp(&elements[b.1].name))
    });
    let mut parent = vec![None; n];
    let mut children = vec![Vec::new(); n];
    for (edge, &(pi, ci)) in resolved.iter().enumerate() {
        parent[ci] = Some((pi, edge));
        children[pi].push((ci, edge));
    }
    Ok(Taxonomy {
        names: elements.iter().map(|e| e.name.clone()).collect(),
        kinds: elements.iter().map(|e| e.kind).collect(),
        parent,
        children,
        edges: resolved,
    })
}

impl Taxonomy {
    pub fn node_count(&self) -> usize {
        self.names.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// `(parent, child)` pairs indexed by edge id.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_names(&self) -> Vec<(String, String)> {
        self.edges
            .iter()
            .map(|&(p, c)| (self.names[p].clone(), self.names[c].clone()))
            .collect()
    }

    /// `(child, edge id)` pairs in lexicographic child order.
    pub fn children(&self, node: usize) -> &[(usize, usize)] {
        &self.children[node]
    }

    pub fn parent(&self, node: usize) -> Option<usize> {
        self.parent[node].map(|(p, _)| p)
    }

    pub fn kind(&self, node: usize) -> ElementKind {
        self.kinds[node]
    }

    pub fn name(&self, node: usize) -> &str {
        &self.names[node]
    }

    /// Distance to the root of the node's tree.
    pub fn depth(&self, node: usize) -> usize {
        let mut d = 0;
        let mut cur = node;
        while let Some(p) = self.parent(cur) {
            d += 1;
            cur = p;
        }
        d
    }

    /// Parents in ascending id order.
    pub fn parents(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.node_count()).filter(|&i| !self.children[i].is_empty())
    }

    /// The two bottom-up passes: value→attribute edges, then attribute→category.
    pub fn passes(&self) -> [Vec<ScatterEdge>; 2] {
        let pass = |kind: ElementKind| {
            self.edges
                .iter()
                .enumerate()
                .filter(|(_, &(_, c))| self.kinds[c] == kind)
                .map(|(weight, &(target, source))| ScatterEdge {
                    target,
                    source,
                    weight,
                })
                .collect()
        };
        [pass(ElementKind::AttributeValue), pass(ElementKind::Attribute)]
    }
}

/// Learnable per-edge affiliation weights `w_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationWeights {
    values: Vec<f64>,
}

impl RelationWeights {
    /// `w_j = 1/|N_i|` for every child `j` of parent `i`.
    pub fn uniform(taxonomy: &Taxonomy) -> Self {
        let values = taxonomy
            .edges
            .iter()
            .map(|&(p, _)| 1.0 / taxonomy.children[p].len() as f64)
            .collect();
        Self { values }
    }

    /// `w_j = count_j / Σ_{k∈N_i} count_k`; falls back to uniform for a
    /// parent whose children all have zero count.
    pub fn from_frequencies(taxonomy: &Taxonomy, counts: &[f64]) -> Self {
        let values = taxonomy
            .edges
            .iter()
            .map(|&(p, c)| {
                let kids = &taxonomy.children[p];
                let total: f64 = kids.iter().map(|&(k, _)| counts[k].max(0.0)).sum();
                if total > 0.0 {
                    counts[c].max(0.0) / total
                } else {
                    1.0 / kids.len() as f64
                }
            })
            .collect();
        Self { values }
    }

    pub fn from_vec(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn get(&self, edge: usize) -> f64 {
        self.values[edge]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `Σ_{j∈N_i} w_j` for every parent, in ascending parent id order.
    pub fn parent_sums(&self, taxonomy: &Taxonomy) -> Vec<(usize, f64)> {
        taxonomy
            .parents()
            .map(|p| {
                (
                    p,
                    taxonomy.children[p]
                        .iter()
                        .map(|&(_, e)| self.values[e])
                        .sum(),
                )
            })
            .collect()
    }
}

/// Records both message-passing passes on `table` (`|F| × D`) with edge
/// weights `weights` (`1 × E`).
pub fn message_pass_graph(
    graph: &mut Graph,
    table: NodeId,
    weights: NodeId,
    taxonomy: &Taxonomy,
) -> Result<NodeId, GradError> {
    let [values_to_attrs, attrs_to_cats] = taxonomy.passes();
    let mid = graph.scatter_weighted(table, weights, &values_to_attrs)?;
    graph.scatter_weighted(mid, weights, &attrs_to_cats)
}

/// Message passing on plain embeddings, one vector per taxonomy node.
pub fn message_pass(
    embeddings: &[Vec<f64>],
    taxonomy: &Taxonomy,
    weights: &RelationWeights,
) -> Result<Vec<Vec<f64>>, TaxonomyError> {
    if embeddings.len() != taxonomy.node_count() {
        return Err(TaxonomyError::EmbeddingCount {
            expected: taxonomy.node_count(),
            found: embeddings.len(),
        });
    }
    let dim = embeddings.first().map_or(0, Vec::len);
    if let Some((node, e)) = embeddings.iter().enumerate().find(|(_, e)| e.len() != dim) {
        return Err(TaxonomyError::DimensionMismatch {
            node,
            expected: dim,
            found: e.len(),
        });
    }
    let mut g = Graph::new();
    let table = g.constant(Tensor::from_rows(embeddings).expect("checked rectangular"));
    let w = g.constant(Tensor::row(weights.as_slice()));
    let out = message_pass_graph(&mut g, table, w, taxonomy)?;
    Ok(g.value(out).to_rows())
}
