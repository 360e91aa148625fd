//! Element adjacency graphs and block-sparse matrices whose pattern is the
//! diagonal block plus one block per neighboring element.
//!
//! Vectors use an element-major layout: the `m` unknowns of element 0, then
//! those of element 1, and so on.

use std::fmt::Write as _;
use std::ops::AddAssign;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dense::{gemv_acc, is_spd, BlockLu};
use crate::error::{Error, Result};

/// Instrumented block-operation counts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCounter {
    /// m x m block times vector products (all kinds).
    pub block_multiplies: u64,
    /// The subset of `block_multiplies` made with element-diagonal coupling
    /// blocks between different stages (multiples of mass blocks).
    pub coupling_multiplies: u64,
    /// Solves with an LU-factored m x m block.
    pub block_solves: u64,
    /// m x m LU factorizations.
    pub block_factorizations: u64,
    /// m x m block times m x m block products (factorization updates).
    pub block_products: u64,
}

impl OpCounter {
    pub fn reset(&mut self) {
        *self = OpCounter::default();
    }

    pub fn merge(&mut self, other: &OpCounter) {
        *self += *other;
    }
}

impl AddAssign for OpCounter {
    fn add_assign(&mut self, rhs: Self) {
        self.block_multiplies += rhs.block_multiplies;
        self.coupling_multiplies += rhs.coupling_multiplies;
        self.block_solves += rhs.block_solves;
        self.block_factorizations += rhs.block_factorizations;
        self.block_products += rhs.block_products;
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElementGraph {
    num_elements: usize,
    adjacency: Vec<Vec<usize>>,
    periodic: bool,
    partition_of: Vec<usize>,
    num_partitions: usize,
}

impl ElementGraph {
    /// 1D chain of `t` elements; element i neighbors i-1 and i+1 (mod t when periodic).
    pub fn build_line_mesh(t: usize, periodic: bool) -> Result<Self> {
        if t < 2 {
            return Err(Error::InvalidMesh(format!("line mesh needs at least 2 elements, got {t}")));
        }
        if periodic && t < 4 {
            return Err(Error::InvalidMesh(format!(
                "periodic line mesh needs at least 4 elements, got {t}"
            )));
        }
        let adjacency = (0..t)
            .map(|i| {
                let mut nbrs = Vec::with_capacity(2);
                if i > 0 {
                    nbrs.push(i - 1);
                } else if periodic {
                    nbrs.push(t - 1);
                }
                if i + 1 < t {
                    nbrs.push(i + 1);
                } else if periodic {
                    nbrs.push(0);
                }
                nbrs.sort_unstable();
                nbrs
            })
            .collect();
        Ok(ElementGraph {
            num_elements: t,
            adjacency,
            periodic,
            partition_of: vec![0; t],
            num_partitions: 1,
        })
    }

    /// Graph from explicit neighbor lists; checked for symmetry and self-loops.
    pub fn from_adjacency(mut adjacency: Vec<Vec<usize>>) -> Result<Self> {
        let t = adjacency.len();
        if t == 0 {
            return Err(Error::InvalidMesh("graph has no elements".into()));
        }
        for (i, nbrs) in adjacency.iter_mut().enumerate() {
            nbrs.sort_unstable();
            nbrs.dedup();
            if nbrs.contains(&i) {
                return Err(Error::InvalidMesh(format!("element {i} lists itself as a neighbor")));
            }
            if let Some(&j) = nbrs.iter().find(|&&j| j >= t) {
                return Err(Error::InvalidMesh(format!("element {i} has out-of-range neighbor {j}")));
            }
        }
        for i in 0..t {
            for &j in &adjacency[i] {
                if adjacency[j].binary_search(&i).is_err() {
                    return Err(Error::InvalidMesh(format!(
                        "adjacency is not symmetric: {j} in adj({i}) but not {i} in adj({j})"
                    )));
                }
            }
        }
        Ok(ElementGraph {
            num_elements: t,
            adjacency,
            periodic: false,
            partition_of: vec![0; t],
            num_partitions: 1,
        })
    }

    pub fn num_elements(&self) -> usize {
        self.num_elements
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    pub fn max_degree(&self) -> usize {
        self.adjacency.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// True when every element has exactly `max_degree()` neighbors.
    pub fn is_uniform_degree(&self) -> bool {
        let r = self.max_degree();
        self.adjacency.iter().all(|a| a.len() == r)
    }

    pub fn is_periodic(&self) -> bool {
        self.periodic
    }

    /// Number of stored blocks of a matrix on this graph: sum over elements of 1 + degree.
    pub fn num_pattern_blocks(&self) -> usize {
        self.num_elements + self.adjacency.iter().map(Vec::len).sum::<usize>()
    }

    pub fn are_neighbors(&self, i: usize, j: usize) -> bool {
        self.adjacency[i].binary_search(&j).is_ok()
    }

    /// True iff no two neighbors of any element are themselves neighbors.
    pub fn satisfies_simplified_ilu_condition(&self) -> bool {
        self.adjacency.iter().all(|nbrs| {
            nbrs.iter()
                .enumerate()
                .all(|(a, &j)| nbrs[a + 1..].iter().all(|&k| !self.are_neighbors(j, k)))
        })
    }

    pub fn partition_of(&self, i: usize) -> usize {
        self.partition_of[i]
    }

    pub fn num_partitions(&self) -> usize {
        self.num_partitions
    }

    /// Copy of this graph with contiguous element ranges assigned to `p`
    /// partitions whose sizes differ by at most one.
    pub fn partition(&self, p: usize) -> Result<Self> {
        let t = self.num_elements;
        if p == 0 || p > t {
            return Err(Error::InvalidPartitionCount {
                partitions: p,
                elements: t,
            });
        }
        let (base, extra) = (t / p, t % p);
        let mut partition_of = Vec::with_capacity(t);
        for part in 0..p {
            let size = base + usize::from(part < extra);
            partition_of.extend(std::iter::repeat_n(part, size));
        }
        Ok(ElementGraph {
            partition_of,
            num_partitions: p,
            ..self.clone()
        })
    }

    /// Same elements and adjacency, regardless of partitioning.
    pub fn same_pattern(&self, other: &ElementGraph) -> bool {
        self.adjacency == other.adjacency
    }
}

/// Block-diagonal matrix with `T` dense `m x m` blocks (mass matrices).
#[derive(Clone, Debug, PartialEq)]
pub struct BlockDiagonalMatrix {
    m: usize,
    data: Vec<f64>,
}

impl BlockDiagonalMatrix {
    pub fn new(m: usize, blocks: Vec<Vec<f64>>) -> Self {
        assert!(blocks.iter().all(|b| b.len() == m * m), "block size mismatch");
        BlockDiagonalMatrix {
            m,
            data: blocks.into_iter().flatten().collect(),
        }
    }

    pub fn identity(t: usize, m: usize) -> Self {
        Self::new(m, vec![crate::dense::identity(m); t])
    }

    pub fn block_size(&self) -> usize {
        self.m
    }

    pub fn num_blocks(&self) -> usize {
        self.data.len() / (self.m * self.m)
    }

    pub fn dim(&self) -> usize {
        self.num_blocks() * self.m
    }

    pub fn block(&self, i: usize) -> &[f64] {
        let mm = self.m * self.m;
        &self.data[i * mm..(i + 1) * mm]
    }

    /// `y += alpha * M x`, one block product per element.
    pub fn matvec_acc(&self, x: &[f64], alpha: f64, y: &mut [f64], counter: &mut OpCounter) {
        let m = self.m;
        for i in 0..self.num_blocks() {
            gemv_acc(self.block(i), &x[i * m..(i + 1) * m], alpha, &mut y[i * m..(i + 1) * m]);
        }
        counter.block_multiplies += self.num_blocks() as u64;
    }

    pub fn matvec(&self, x: &[f64], counter: &mut OpCounter) -> Result<Vec<f64>> {
        check_len(self.dim(), x.len())?;
        let mut y = vec![0.0; x.len()];
        self.matvec_acc(x, 1.0, &mut y, counter);
        Ok(y)
    }

    /// Index of the first block that fails a Cholesky factorization, if any.
    pub fn first_non_spd_block(&self) -> Option<usize> {
        (0..self.num_blocks()).find(|&i| !is_spd(self.block(i), self.m))
    }

    /// `M^{-1} y` by per-block LU.
    pub fn solve(&self, y: &[f64], counter: &mut OpCounter) -> Result<Vec<f64>> {
        check_len(self.dim(), y.len())?;
        let m = self.m;
        let mut x = y.to_vec();
        for i in 0..self.num_blocks() {
            let lu = BlockLu::factor(self.block(i), m).map_err(|e| Error::SingularPivot {
                element: i,
                condition: e.condition,
            })?;
            lu.solve_in_place(&mut x[i * m..(i + 1) * m]);
        }
        counter.block_factorizations += self.num_blocks() as u64;
        counter.block_solves += self.num_blocks() as u64;
        Ok(x)
    }
}

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}

/// Block-sparse matrix on an [`ElementGraph`] pattern, stored block-row by
/// block-row with sorted block columns (the diagonal block included).
#[derive(Clone, Debug, PartialEq)]
pub struct BlockSparseMatrix {
    graph: Arc<ElementGraph>,
    m: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    diag_pos: Vec<usize>,
    data: Vec<f64>,
}

impl BlockSparseMatrix {
    pub fn zeros(graph: Arc<ElementGraph>, m: usize) -> Self {
        let t = graph.num_elements();
        let mut row_ptr = Vec::with_capacity(t + 1);
        let mut cols = Vec::with_capacity(graph.num_pattern_blocks());
        let mut diag_pos = Vec::with_capacity(t);
        row_ptr.push(0);
        for i in 0..t {
            let mut row: Vec<usize> = graph.neighbors(i).to_vec();
            row.push(i);
            row.sort_unstable();
            diag_pos.push(cols.len() + row.iter().position(|&j| j == i).unwrap());
            cols.extend(row);
            row_ptr.push(cols.len());
        }
        let data = vec![0.0; cols.len() * m * m];
        BlockSparseMatrix {
            graph,
            m,
            row_ptr,
            cols,
            diag_pos,
            data,
        }
    }

    /// Fills every pattern block `(i, j)` from `f(i, j)`.
    pub fn from_fn(graph: Arc<ElementGraph>, m: usize, mut f: impl FnMut(usize, usize) -> Vec<f64>) -> Self {
        let mut a = Self::zeros(graph, m);
        for i in 0..a.num_block_rows() {
            for pos in a.row_ptr[i]..a.row_ptr[i + 1] {
                let j = a.cols[pos];
                let block = f(i, j);
                assert_eq!(block.len(), m * m, "block ({i},{j}) has wrong size");
                a.block_at_mut(pos).copy_from_slice(&block);
            }
        }
        a
    }

    pub fn graph(&self) -> &Arc<ElementGraph> {
        &self.graph
    }

    pub fn block_size(&self) -> usize {
        self.m
    }

    pub fn num_block_rows(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.num_block_rows() * self.m
    }

    pub fn num_stored_blocks(&self) -> usize {
        self.cols.len()
    }

    /// Positions (into block storage) and columns of block row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |pos| (pos, self.cols[pos]))
    }

    pub fn position(&self, i: usize, j: usize) -> Option<usize> {
        let row = &self.cols[self.row_ptr[i]..self.row_ptr[i + 1]];
        row.binary_search(&j).ok().map(|k| self.row_ptr[i] + k)
    }

    pub fn diag_position(&self, i: usize) -> usize {
        self.diag_pos[i]
    }

    pub fn block_at(&self, pos: usize) -> &[f64] {
        let mm = self.m * self.m;
        &self.data[pos * mm..(pos + 1) * mm]
    }

    pub fn block_at_mut(&mut self, pos: usize) -> &mut [f64] {
        let mm = self.m * self.m;
        &mut self.data[pos * mm..(pos + 1) * mm]
    }

    pub fn block(&self, i: usize, j: usize) -> Option<&[f64]> {
        self.position(i, j).map(|p| self.block_at(p))
    }

    pub fn block_mut(&mut self, i: usize, j: usize) -> Option<&mut [f64]> {
        self.position(i, j).map(move |p| self.block_at_mut(p))
    }

    /// `y += alpha * A x` without length checks.
    pub fn matvec_acc(&self, x: &[f64], alpha: f64, y: &mut [f64], counter: &mut OpCounter) {
        let m = self.m;
        for i in 0..self.num_block_rows() {
            let yi = &mut y[i * m..(i + 1) * m];
            for (pos, j) in self.row(i) {
                gemv_acc(self.block_at(pos), &x[j * m..(j + 1) * m], alpha, yi);
            }
        }
        counter.block_multiplies += self.num_stored_blocks() as u64;
    }

    pub fn matvec(&self, x: &[f64], counter: &mut OpCounter) -> Result<Vec<f64>> {
        check_len(self.dim(), x.len())?;
        let mut y = vec![0.0; self.dim()];
        self.matvec_acc(x, 1.0, &mut y, counter);
        Ok(y)
    }

    /// `alpha * M + beta * self`, same pattern.
    pub fn scaled_plus_mass(&self, beta: f64, mass: &BlockDiagonalMatrix, alpha: f64) -> Result<Self> {
        if mass.num_blocks() != self.num_block_rows() || mass.block_size() != self.m {
            return Err(Error::StructureMismatch(format!(
                "mass has {} blocks of size {}, matrix has {} block rows of size {}",
                mass.num_blocks(),
                mass.block_size(),
                self.num_block_rows(),
                self.m
            )));
        }
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v *= beta);
        for i in 0..self.num_block_rows() {
            let pos = self.diag_pos[i];
            for (d, mv) in out.block_at_mut(pos).iter_mut().zip(mass.block(i)) {
                *d += alpha * mv;
            }
        }
        Ok(out)
    }

    /// Dense row-major copy (tests and oracles).
    pub fn to_dense(&self) -> Vec<f64> {
        let (m, n) = (self.m, self.dim());
        let mut d = vec![0.0; n * n];
        for i in 0..self.num_block_rows() {
            for (pos, j) in self.row(i) {
                let b = self.block_at(pos);
                for r in 0..m {
                    for c in 0..m {
                        d[(i * m + r) * n + j * m + c] = b[r * m + c];
                    }
                }
            }
        }
        d
    }

    /// Line-oriented text dump: header `T m nnz_blocks`, then one line per
    /// block `i j v_00 v_01 ... v_(m-1)(m-1)`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{} {} {}", self.num_block_rows(), self.m, self.num_stored_blocks());
        for i in 0..self.num_block_rows() {
            for (pos, j) in self.row(i) {
                let _ = write!(out, "{i} {j}");
                for v in self.block_at(pos) {
                    let _ = write!(out, " {v:e}");
                }
                out.push('\n');
            }
        }
        out
    }

    /// Inverse of [`BlockSparseMatrix::to_text`]; the graph is rebuilt from the block pattern.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::Parse("empty input".into()))?;
        let nums: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| Error::Parse(format!("bad header token `{t}`"))))
            .collect::<Result<_>>()?;
        let [t, m, nnz] = nums[..] else {
            return Err(Error::Parse(format!("header must have 3 fields, got `{header}`")));
        };
        let mut entries = Vec::with_capacity(nnz);
        let mut adjacency = vec![Vec::new(); t];
        for line in lines {
            let mut tok = line.split_whitespace();
            let mut index = |what: &str| -> Result<usize> {
                tok.next()
                    .ok_or_else(|| Error::Parse(format!("missing {what} in `{line}`")))?
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad {what} in `{line}`")))
            };
            let (i, j) = (index("row")?, index("column")?);
            if i >= t || j >= t {
                return Err(Error::Parse(format!("block ({i},{j}) out of range for T = {t}")));
            }
            let vals: Vec<f64> = tok
                .map(|v| v.parse().map_err(|_| Error::Parse(format!("bad value `{v}`"))))
                .collect::<Result<_>>()?;
            if vals.len() != m * m {
                return Err(Error::Parse(format!("block ({i},{j}) has {} values, expected {}", vals.len(), m * m)));
            }
            if i != j {
                adjacency[i].push(j);
            }
            entries.push((i, j, vals));
        }
        if entries.len() != nnz {
            return Err(Error::Parse(format!("header declares {nnz} blocks, found {}", entries.len())));
        }
        let graph = Arc::new(ElementGraph::from_adjacency(adjacency)?);
        let mut a = BlockSparseMatrix::zeros(graph, m);
        if a.num_stored_blocks() != nnz {
            return Err(Error::Parse("every element needs a diagonal block".into()));
        }
        for (i, j, vals) in entries {
            a.block_mut(i, j)
                .ok_or_else(|| Error::Parse(format!("duplicate or missing block ({i},{j})")))?
                .copy_from_slice(&vals);
        }
        Ok(a)
    }
}
