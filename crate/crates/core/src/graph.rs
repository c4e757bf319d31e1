//! Geometry of the random field: hop distances, neighborhoods, partitions
//! into blocks, enlarged blocks and the combinatorial quantities derived
//! from them.
//!
//! Vertex sets are passed around as sorted, deduplicated `Vec<usize>`.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const UNREACHED: u32 = u32::MAX;

/// Sort and deduplicate a list of vertex ids.
pub fn normalize_set(mut set: Vec<usize>) -> Vec<usize> {
    set.sort_unstable();
    set.dedup();
    set
}

fn is_subset(small: &[usize], big: &[usize]) -> bool {
    // both sorted
    let mut j = 0;
    for &v in small {
        while j < big.len() && big[j] < v {
            j += 1;
        }
        if j == big.len() || big[j] != v {
            return false;
        }
    }
    true
}

/// Undirected, connected graph with a cached all-pairs hop-distance table.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialGraph {
    num_vertices: usize,
    adjacency: Vec<Vec<usize>>,
    dist: Vec<u32>,
    /// Lattice dimensions for graphs built by the lattice constructors;
    /// `ring` marks a periodic (cycle) lattice.
    lattice: Option<Lattice>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Lattice {
    dims: Vec<usize>,
    ring: bool,
}

impl SpatialGraph {
    /// Build a graph from an edge list. Duplicate edges are merged; self-loops,
    /// out-of-range ids and disconnected graphs are rejected.
    pub fn new(num_vertices: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if num_vertices == 0 {
            return Err(Error::InvalidArgument("graph needs at least one vertex".into()));
        }
        let mut adjacency = vec![Vec::new(); num_vertices];
        for &(a, b) in edges {
            for v in [a, b] {
                if v >= num_vertices {
                    return Err(Error::VertexOutOfRange {
                        vertex: v,
                        num_vertices,
                    });
                }
            }
            if a == b {
                return Err(Error::SelfLoop(a));
            }
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        for list in adjacency.iter_mut() {
            list.sort_unstable();
            list.dedup();
        }

        let mut dist = vec![UNREACHED; num_vertices * num_vertices];
        let mut queue = VecDeque::new();
        for src in 0..num_vertices {
            let row = &mut dist[src * num_vertices..(src + 1) * num_vertices];
            row[src] = 0;
            queue.clear();
            queue.push_back(src);
            while let Some(v) = queue.pop_front() {
                let dv = row[v];
                for &w in &adjacency[v] {
                    if row[w] == UNREACHED {
                        row[w] = dv + 1;
                        queue.push_back(w);
                    }
                }
            }
        }
        if let Some(w) = (0..num_vertices).find(|&w| dist[w] == UNREACHED) {
            return Err(Error::Disconnected(w));
        }

        Ok(Self {
            num_vertices,
            adjacency,
            dist,
            lattice: None,
        })
    }

    pub fn num_vertices(&self) -> usize {
        self.num_vertices
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adjacency[v]
    }

    pub fn num_edges(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.num_edges());
        for (v, list) in self.adjacency.iter().enumerate() {
            out.extend(list.iter().filter(|&&w| w > v).map(|&w| (v, w)));
        }
        out
    }

    pub fn all_vertices(&self) -> Vec<usize> {
        (0..self.num_vertices).collect()
    }

    fn check_vertex(&self, v: usize) -> Result<()> {
        if v < self.num_vertices {
            Ok(())
        } else {
            Err(Error::VertexOutOfRange {
                vertex: v,
                num_vertices: self.num_vertices,
            })
        }
    }

    fn check_set(&self, set: &[usize]) -> Result<()> {
        set.iter().try_for_each(|&v| self.check_vertex(v))
    }

    /// Hop distance between two vertices.
    pub fn dist(&self, v: usize, w: usize) -> usize {
        self.dist[v * self.num_vertices + w] as usize
    }

    pub fn diameter(&self) -> usize {
        self.dist.iter().copied().max().unwrap_or(0) as usize
    }

    /// `N(v) = {w : d(v, w) <= r}`, always containing `v` itself.
    pub fn neighborhood(&self, v: usize, r: usize) -> Result<Vec<usize>> {
        self.check_vertex(v)?;
        Ok((0..self.num_vertices)
            .filter(|&w| self.dist(v, w) <= r)
            .collect())
    }

    /// Minimum pairwise hop distance between two non-empty sets.
    pub fn set_distance(&self, a: &[usize], b: &[usize]) -> Result<usize> {
        if a.is_empty() || b.is_empty() {
            return Err(Error::EmptySet("set_distance"));
        }
        self.check_set(a)?;
        self.check_set(b)?;
        Ok(a
            .iter()
            .flat_map(|&v| b.iter().map(move |&w| (v, w)))
            .map(|(v, w)| self.dist(v, w))
            .min()
            .unwrap_or(0))
    }

    /// Distance from `set` to `target`, with an empty target at infinite
    /// distance (`None`).
    pub fn distance_to(&self, set: &[usize], target: &[usize]) -> Result<Option<usize>> {
        if target.is_empty() {
            self.check_set(set)?;
            return Ok(None);
        }
        self.set_distance(set, target).map(Some)
    }

    /// Split `set` into `(boundary, interior)`: a vertex is on the boundary
    /// when its radius-`r` neighborhood leaves the set.
    pub fn boundary_interior(&self, set: &[usize], r: usize) -> Result<(Vec<usize>, Vec<usize>)> {
        self.check_set(set)?;
        let set = normalize_set(set.to_vec());
        let mut boundary = Vec::new();
        let mut interior = Vec::new();
        for &v in &set {
            let nv = self.neighborhood(v, r)?;
            if is_subset(&nv, &set) {
                interior.push(v);
            } else {
                boundary.push(v);
            }
        }
        Ok((boundary, interior))
    }

    pub fn boundary(&self, set: &[usize], r: usize) -> Result<Vec<usize>> {
        self.boundary_interior(set, r).map(|(b, _)| b)
    }

    /// `{v : d(v, block) <= b}`.
    pub fn enlarge_block(&self, block: &[usize], b: usize) -> Result<Vec<usize>> {
        if block.is_empty() {
            return Err(Error::EmptySet("enlarge_block"));
        }
        self.check_set(block)?;
        Ok((0..self.num_vertices)
            .filter(|&v| block.iter().any(|&k| self.dist(v, k) <= b))
            .collect())
    }

    pub fn path(n: usize) -> Result<Self> {
        let edges: Vec<_> = (1..n).map(|v| (v - 1, v)).collect();
        let mut g = Self::new(n, &edges)?;
        g.lattice = Some(Lattice {
            dims: vec![n],
            ring: false,
        });
        Ok(g)
    }

    pub fn cycle(n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidArgument(format!(
                "a cycle needs at least 3 vertices, got {n}"
            )));
        }
        let mut edges: Vec<_> = (1..n).map(|v| (v - 1, v)).collect();
        edges.push((n - 1, 0));
        let mut g = Self::new(n, &edges)?;
        g.lattice = Some(Lattice {
            dims: vec![n],
            ring: true,
        });
        Ok(g)
    }

    /// Rectangular lattice; the first coordinate varies fastest in the
    /// vertex numbering.
    pub fn grid(dims: &[usize]) -> Result<Self> {
        if dims.is_empty() || dims.contains(&0) {
            return Err(Error::InvalidArgument(format!("bad grid dimensions {dims:?}")));
        }
        let n: usize = dims.iter().product();
        let strides = strides_of(dims);
        let mut edges = Vec::new();
        for v in 0..n {
            for (&len, &stride) in dims.iter().zip(&strides) {
                if (v / stride) % len + 1 < len {
                    edges.push((v, v + stride));
                }
            }
        }
        let mut g = Self::new(n, &edges)?;
        g.lattice = Some(Lattice {
            dims: dims.to_vec(),
            ring: false,
        });
        Ok(g)
    }

    /// Tile a lattice graph into congruent blocks of `block_shape`; along
    /// each axis the last block absorbs any remainder.
    pub fn regular_partition(&self, block_shape: &[usize]) -> Result<Partition> {
        let offsets = vec![0; block_shape.len()];
        self.shifted_partition(block_shape, &offsets)
    }

    /// Like [`regular_partition`](Self::regular_partition) but with the tiling
    /// shifted by `offset` along each axis. On a ring the blocks wrap around;
    /// on an open axis the leading `offset` vertices form a shorter block.
    pub fn shifted_partition(&self, block_shape: &[usize], offset: &[usize]) -> Result<Partition> {
        let lattice = self.lattice.as_ref().ok_or_else(|| {
            Error::InvalidArgument("regular partitions need a lattice-built graph".into())
        })?;
        if block_shape.len() != lattice.dims.len() || offset.len() != lattice.dims.len() {
            return Err(Error::InvalidArgument(format!(
                "block shape {block_shape:?} does not match lattice dims {:?}",
                lattice.dims
            )));
        }
        // per-axis list of chunk index for each coordinate
        let mut chunk_of: Vec<Vec<usize>> = Vec::with_capacity(block_shape.len());
        for ((&len, &size), &off) in lattice.dims.iter().zip(block_shape).zip(offset) {
            if size == 0 || size > len {
                return Err(Error::InvalidArgument(format!(
                    "block size {size} invalid for lattice axis of length {len}"
                )));
            }
            let off = off % size;
            let chunks = if lattice.ring {
                let full = len / size;
                (0..len)
                    .map(|c| {
                        let shifted = (c + len - off) % len;
                        (shifted / size).min(full - 1)
                    })
                    .collect()
            } else {
                let head = usize::from(off > 0);
                let full = (len - off) / size;
                (0..len)
                    .map(|c| {
                        if c < off {
                            0
                        } else {
                            head + ((c - off) / size).min(full.max(1) - 1)
                        }
                    })
                    .collect()
            };
            chunk_of.push(chunks);
        }
        let strides = strides_of(&lattice.dims);
        let chunk_counts: Vec<usize> = chunk_of
            .iter()
            .map(|c| c.iter().copied().max().unwrap_or(0) + 1)
            .collect();
        let chunk_strides = strides_of(&chunk_counts);
        let labels: Vec<usize> = (0..self.num_vertices)
            .map(|v| {
                lattice
                    .dims
                    .iter()
                    .zip(&strides)
                    .zip(&chunk_of)
                    .zip(&chunk_strides)
                    .map(|(((&len, &stride), chunks), &cs)| chunks[(v / stride) % len] * cs)
                    .sum()
            })
            .collect();
        Partition::from_labels(&labels)
    }
}

pub(crate) fn strides_of(dims: &[usize]) -> Vec<usize> {
    let mut strides = Vec::with_capacity(dims.len());
    let mut acc = 1;
    for &d in dims {
        strides.push(acc);
        acc *= d;
    }
    strides
}

/// Disjoint, non-empty blocks covering every vertex.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    blocks: Vec<Vec<usize>>,
    block_of: Vec<usize>,
}

impl Partition {
    pub fn new(num_vertices: usize, blocks: Vec<Vec<usize>>) -> Result<Self> {
        let mut block_of = vec![usize::MAX; num_vertices];
        let mut normalized = Vec::with_capacity(blocks.len());
        for (k, block) in blocks.into_iter().enumerate() {
            if block.is_empty() {
                return Err(Error::InvalidPartition(format!("block {k} is empty")));
            }
            let block = normalize_set(block);
            for &v in &block {
                if v >= num_vertices {
                    return Err(Error::VertexOutOfRange {
                        vertex: v,
                        num_vertices,
                    });
                }
                if block_of[v] != usize::MAX {
                    return Err(Error::InvalidPartition(format!(
                        "vertex {v} appears in blocks {} and {k}",
                        block_of[v]
                    )));
                }
                block_of[v] = k;
            }
            normalized.push(block);
        }
        if let Some(v) = block_of.iter().position(|&k| k == usize::MAX) {
            return Err(Error::InvalidPartition(format!("vertex {v} is not covered")));
        }
        Ok(Self {
            blocks: normalized,
            block_of,
        })
    }

    /// Blocks numbered in order of first appearance of their label.
    pub fn from_labels(labels: &[usize]) -> Result<Self> {
        let mut order: Vec<usize> = Vec::new();
        let mut blocks: Vec<Vec<usize>> = Vec::new();
        for (v, &label) in labels.iter().enumerate() {
            match order.iter().position(|&l| l == label) {
                Some(k) => blocks[k].push(v),
                None => {
                    order.push(label);
                    blocks.push(vec![v]);
                }
            }
        }
        Self::new(labels.len(), blocks)
    }

    /// The partition with a single block holding every vertex.
    pub fn whole(num_vertices: usize) -> Self {
        Self {
            blocks: vec![(0..num_vertices).collect()],
            block_of: vec![0; num_vertices],
        }
    }

    /// One block per vertex.
    pub fn singletons(num_vertices: usize) -> Self {
        Self {
            blocks: (0..num_vertices).map(|v| vec![v]).collect(),
            block_of: (0..num_vertices).collect(),
        }
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn block_of(&self, v: usize) -> usize {
        self.block_of[v]
    }

    pub fn num_vertices(&self) -> usize {
        self.block_of.len()
    }

    pub fn max_block_size(&self) -> usize {
        self.blocks.iter().map(Vec::len).max().unwrap_or(0)
    }
}

/// A partition together with its blocks grown by `b` hops.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnlargedPartition {
    base: Partition,
    b: usize,
    enlarged: Vec<Vec<usize>>,
    ext: Vec<Vec<usize>>,
}

impl EnlargedPartition {
    pub fn new(graph: &SpatialGraph, base: Partition, b: usize) -> Result<Self> {
        if base.num_vertices() != graph.num_vertices() {
            return Err(Error::LengthMismatch {
                expected: graph.num_vertices(),
                got: base.num_vertices(),
            });
        }
        let enlarged = base
            .blocks()
            .iter()
            .map(|k| graph.enlarge_block(k, b))
            .collect::<Result<Vec<_>>>()?;
        let ext = base
            .blocks()
            .iter()
            .zip(&enlarged)
            .map(|(k, kbar)| kbar.iter().copied().filter(|v| !k.contains(v)).collect())
            .collect();
        Ok(Self {
            base,
            b,
            enlarged,
            ext,
        })
    }

    pub fn base(&self) -> &Partition {
        &self.base
    }

    pub fn b(&self) -> usize {
        self.b
    }

    pub fn enlarged_blocks(&self) -> &[Vec<usize>] {
        &self.enlarged
    }

    /// `K̄ \ K` for each block.
    pub fn ext_of(&self, k: usize) -> &[usize] {
        &self.ext[k]
    }

    pub fn len(&self) -> usize {
        self.base.len()
    }

    pub fn is_empty(&self) -> bool {
        self.base.is_empty()
    }

    pub fn max_enlarged_size(&self) -> usize {
        self.enlarged.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Total vertices touched by one update, `Σ_K |K̄|`.
    pub fn total_enlarged_size(&self) -> usize {
        self.enlarged.iter().map(Vec::len).sum()
    }

    /// Distance from `set` to the boundary of the enlarged block of the
    /// block with index `k`; `None` when that boundary is empty.
    pub fn border_distance(
        &self,
        graph: &SpatialGraph,
        set: &[usize],
        k: usize,
        r: usize,
    ) -> Result<Option<usize>> {
        let boundary = graph.boundary(&self.enlarged[k], r)?;
        graph.distance_to(set, &boundary)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionStats {
    /// `max_v |N(v)|`
    pub delta: usize,
    /// largest block
    pub k_inf: usize,
    /// largest enlarged block
    pub kbar_inf: usize,
    /// `max_K |{K' : d(K, K') <= r}|`
    pub delta_k: usize,
    /// `max_K |{K' : d(K', K̄) <= r}|`
    pub delta_kbar: usize,
}

pub fn partition_stats(
    graph: &SpatialGraph,
    partition: &EnlargedPartition,
    r: usize,
) -> Result<PartitionStats> {
    let delta = (0..graph.num_vertices())
        .map(|v| graph.neighborhood(v, r).map(|n| n.len()))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .max()
        .unwrap_or(0);
    let blocks = partition.base().blocks();
    let mut delta_k = 0;
    let mut delta_kbar = 0;
    for (k, block) in blocks.iter().enumerate() {
        let mut near = 0;
        let mut near_enlarged = 0;
        for other in blocks {
            if graph.set_distance(block, other)? <= r {
                near += 1;
            }
            if graph.set_distance(other, &partition.enlarged_blocks()[k])? <= r {
                near_enlarged += 1;
            }
        }
        delta_k = delta_k.max(near);
        delta_kbar = delta_kbar.max(near_enlarged);
    }
    Ok(PartitionStats {
        delta,
        k_inf: partition.base().max_block_size(),
        kbar_inf: partition.max_enlarged_size(),
        delta_k,
        delta_kbar,
    })
}

/// Serialized form of a graph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphDoc {
    pub vertices: usize,
    pub edges: Vec<(usize, usize)>,
}

impl GraphDoc {
    pub fn from_graph(graph: &SpatialGraph) -> Self {
        Self {
            vertices: graph.num_vertices(),
            edges: graph.edges(),
        }
    }

    pub fn build(&self) -> Result<SpatialGraph> {
        SpatialGraph::new(self.vertices, &self.edges)
    }
}

/// Serialized form of an (enlarged) partition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionDoc {
    pub blocks: Vec<Vec<usize>>,
    #[serde(default)]
    pub b: usize,
}

impl PartitionDoc {
    pub fn from_partition(p: &EnlargedPartition) -> Self {
        Self {
            blocks: p.base().blocks().to_vec(),
            b: p.b(),
        }
    }

    pub fn build(&self, graph: &SpatialGraph) -> Result<EnlargedPartition> {
        let base = Partition::new(graph.num_vertices(), self.blocks.clone())?;
        EnlargedPartition::new(graph, base, self.b)
    }
}
