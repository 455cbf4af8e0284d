//! Multimodal attributed graph data model and normalized graph operators.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::sparse::Csr;

/// Unweighted undirected adjacency structure in compressed-row form.
///
/// Neighbor lists are sorted and duplicate free. Every entry `(u, v)` has a
/// matching `(v, u)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Adjacency {
    indptr: Vec<usize>,
    indices: Vec<usize>,
}

impl Adjacency {
    /// Symmetrizes and deduplicates `edges`. Self-loops are dropped unless
    /// `keep_self_loops` is set.
    pub fn from_edges(
        n: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
        keep_self_loops: bool,
    ) -> Result<Self> {
        let mut lists: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (u, v) in edges {
            for id in [u, v] {
                if id >= n {
                    return Err(Error::NodeOutOfRange { id, n });
                }
            }
            if u == v {
                if keep_self_loops {
                    lists[u].push(u);
                }
                continue;
            }
            lists[u].push(v);
            lists[v].push(u);
        }
        let mut indptr = Vec::with_capacity(n + 1);
        let mut indices = Vec::new();
        indptr.push(0);
        for mut list in lists {
            list.sort_unstable();
            list.dedup();
            indices.extend(list);
            indptr.push(indices.len());
        }
        Ok(Self { indptr, indices })
    }

    pub fn n(&self) -> usize {
        self.indptr.len() - 1
    }

    pub fn neighbors(&self, u: usize) -> &[usize] {
        &self.indices[self.indptr[u]..self.indptr[u + 1]]
    }

    pub fn degree(&self, u: usize) -> usize {
        self.indptr[u + 1] - self.indptr[u]
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.neighbors(u).binary_search(&v).is_ok()
    }

    /// Undirected edges as `(u, v)` with `u <= v`, in ascending order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n()).flat_map(move |u| {
            self.neighbors(u)
                .iter()
                .copied()
                .filter(move |&v| v >= u)
                .map(move |v| (u, v))
        })
    }

    /// Number of undirected edges (a self-loop counts once).
    pub fn num_edges(&self) -> usize {
        self.edges().count()
    }

    pub fn has_self_loops(&self) -> bool {
        (0..self.n()).any(|u| self.has_edge(u, u))
    }

    /// Copy of `self` in which every node without neighbors gets a self-loop.
    pub fn with_isolated_self_loops(&self) -> Self {
        let n = self.n();
        let mut indptr = Vec::with_capacity(n + 1);
        let mut indices = Vec::with_capacity(self.indices.len());
        indptr.push(0);
        for u in 0..n {
            if self.degree(u) == 0 {
                indices.push(u);
            } else {
                indices.extend_from_slice(self.neighbors(u));
            }
            indptr.push(indices.len());
        }
        Self { indptr, indices }
    }

    /// Keeps only the edges accepted by `keep`, which sees each undirected edge once.
    pub fn filter_edges(&self, mut keep: impl FnMut(usize, usize) -> bool) -> Self {
        let kept: Vec<(usize, usize)> = self.edges().filter(|&(u, v)| keep(u, v)).collect();
        Self::from_edges(self.n(), kept, true).expect("ids already validated")
    }
}

/// Per-modality attribute matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalityFeatures {
    pub name: String,
    pub data: Array2<f32>,
}

impl ModalityFeatures {
    pub fn new(name: impl Into<String>, data: Array2<f32>) -> Self {
        Self {
            name: name.into(),
            data,
        }
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    /// Widened copy used by all numerical routines.
    pub fn to_f64(&self) -> Array2<f64> {
        self.data.mapv(f64::from)
    }
}

/// Undirected graph with one attribute matrix per modality.
#[derive(Debug, Clone, PartialEq)]
pub struct MultimodalGraph {
    adjacency: Adjacency,
    modalities: Vec<ModalityFeatures>,
    labels: Option<Vec<Option<usize>>>,
    num_clusters: Option<usize>,
}

impl MultimodalGraph {
    /// Validates and assembles a graph. The edge list is symmetrized,
    /// deduplicated and stripped of self-loops.
    pub fn new(
        n: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
        modalities: Vec<ModalityFeatures>,
        labels: Option<Vec<Option<usize>>>,
    ) -> Result<Self> {
        let adjacency = Adjacency::from_edges(n, edges, false)?;
        for m in &modalities {
            if m.data.nrows() != n {
                return Err(Error::RowMismatch {
                    modality: m.name.clone(),
                    rows: m.data.nrows(),
                    expected: n,
                });
            }
            if m.data.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("modality `{}` features", m.name)));
            }
        }
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(Error::LabelCount {
                    got: l.len(),
                    expected: n,
                });
            }
        }
        Ok(Self {
            adjacency,
            modalities,
            labels,
            num_clusters: None,
        })
    }

    pub fn with_num_clusters(mut self, k: Option<usize>) -> Self {
        self.num_clusters = k;
        self
    }

    pub fn n(&self) -> usize {
        self.adjacency.n()
    }

    pub fn adjacency(&self) -> &Adjacency {
        &self.adjacency
    }

    pub fn modalities(&self) -> &[ModalityFeatures] {
        &self.modalities
    }

    pub fn num_modalities(&self) -> usize {
        self.modalities.len()
    }

    pub fn labels(&self) -> Option<&[Option<usize>]> {
        self.labels.as_deref()
    }

    pub fn num_clusters(&self) -> Option<usize> {
        self.num_clusters
    }

    pub fn num_edges(&self) -> usize {
        self.adjacency.num_edges()
    }
}

/// `Â = D^{-1/2} A D^{-1/2}` together with the degrees it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedOperators {
    pub a_hat: Csr,
    pub degrees: Vec<f64>,
}

impl NormalizedOperators {
    pub fn n(&self) -> usize {
        self.degrees.len()
    }
}

/// Symmetric normalization of the graph adjacency.
///
/// Nodes of degree zero receive a unit self-loop first so that `D` is
/// invertible; their row of `Â` is then the unit vector on the diagonal.
pub fn normalize_adjacency(g: &MultimodalGraph) -> NormalizedOperators {
    normalize(g.adjacency())
}

pub(crate) fn normalize(adj: &Adjacency) -> NormalizedOperators {
    let adj = adj.with_isolated_self_loops();
    let n = adj.n();
    let degrees: Vec<f64> = (0..n).map(|u| adj.degree(u) as f64).collect();
    let inv_sqrt: Vec<f64> = degrees.iter().map(|d| 1.0 / d.sqrt()).collect();
    let mut values = Vec::with_capacity(adj.indices.len());
    for u in 0..n {
        values.extend(adj.neighbors(u).iter().map(|&v| inv_sqrt[u] * inv_sqrt[v]));
    }
    let a_hat = Csr::from_parts(n, n, adj.indptr.clone(), adj.indices.clone(), values);
    NormalizedOperators { a_hat, degrees }
}

/// Normalized Laplacian `L = I − Â`.
pub fn laplacian(ops: &NormalizedOperators) -> Csr {
    let n = ops.n();
    let mut indptr = Vec::with_capacity(n + 1);
    let mut indices = Vec::with_capacity(ops.a_hat.nnz() + n);
    let mut values = Vec::with_capacity(ops.a_hat.nnz() + n);
    indptr.push(0);
    for r in 0..n {
        let mut diag_done = false;
        for (c, v) in ops.a_hat.row(r) {
            if !diag_done && c >= r {
                diag_done = true;
                if c == r {
                    indices.push(r);
                    values.push(1.0 - v);
                    continue;
                }
                indices.push(r);
                values.push(1.0);
            }
            indices.push(c);
            values.push(-v);
        }
        if !diag_done {
            indices.push(r);
            values.push(1.0);
        }
        indptr.push(indices.len());
    }
    Csr::from_parts(n, n, indptr, indices, values)
}
