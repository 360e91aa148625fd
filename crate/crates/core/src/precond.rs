//! Block ILU(0) preconditioners: the plain factorization of one
//! block-sparse matrix, the stage-coupled factorization of the whole
//! transformed stage operator, and the stage-uncoupled (optionally shifted)
//! factorization. All variants can be restricted to mesh partitions, in which
//! case couplings between elements of different partitions are dropped.

use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dense::{gemm, gemm_acc, gemv_acc, BlockLu};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::mesh_blocks::{check_len, BlockSparseMatrix, ElementGraph, OpCounter};
use crate::stage_system::StageOperator;

/// Which couplings survive the factorization. Element pairs in different
/// partitions are dropped; a single partition keeps everything.
#[derive(Clone, Debug, PartialEq)]
pub struct PartitionRestriction {
    partition_of: Vec<usize>,
    cut_edges: usize,
}

impl PartitionRestriction {
    pub fn none(num_elements: usize) -> Self {
        PartitionRestriction {
            partition_of: vec![0; num_elements],
            cut_edges: 0,
        }
    }

    pub fn keeps(&self, i: usize, j: usize) -> bool {
        self.partition_of[i] == self.partition_of[j]
    }

    /// Undirected adjacency edges dropped (each one drops two blocks).
    pub fn cut_edges(&self) -> usize {
        self.cut_edges
    }

    pub fn num_elements(&self) -> usize {
        self.partition_of.len()
    }
}

/// Restriction induced by the partition assignment of `graph`.
pub fn restrict_to_partitions(graph: &ElementGraph) -> PartitionRestriction {
    let t = graph.num_elements();
    let partition_of: Vec<usize> = (0..t).map(|i| graph.partition_of(i)).collect();
    let cut_edges = (0..t)
        .flat_map(|i| graph.neighbors(i).iter().map(move |&j| (i, j)))
        .filter(|&(i, j)| i < j && partition_of[i] != partition_of[j])
        .count();
    PartitionRestriction { partition_of, cut_edges }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum IluAlgorithm {
    /// Simplified path when no two neighbors of an element are neighbors of each other.
    Auto,
    General,
    Simplified,
}

/// Plain block ILU(0): `L̃` (unit block lower, strictly lower blocks stored)
/// and `Ũ` share the storage of the input pattern.
#[derive(Clone, Debug)]
pub struct BlockIlu0 {
    factors: BlockSparseMatrix,
    kept: Vec<bool>,
    diag_lu: Vec<BlockLu>,
    algorithm: IluAlgorithm,
}

struct PivotFailure {
    element: usize,
    condition: f64,
}

fn kept_positions(a: &BlockSparseMatrix, restriction: &PartitionRestriction) -> Vec<bool> {
    let mut kept = vec![false; a.num_stored_blocks()];
    for i in 0..a.num_block_rows() {
        for (pos, j) in a.row(i) {
            kept[pos] = restriction.keeps(i, j);
        }
    }
    kept
}

/// In-place right-looking ILU(0) on the kept pattern; returns the pivot LUs.
fn factor_in_place(
    a: &mut BlockSparseMatrix,
    kept: &[bool],
    general: bool,
    counter: &mut OpCounter,
) -> std::result::Result<Vec<BlockLu>, PivotFailure> {
    let m = a.block_size();
    let t = a.num_block_rows();
    let mut lus = Vec::with_capacity(t);
    for i in 0..t {
        let lu = BlockLu::factor(a.block_at(a.diag_position(i)), m).map_err(|e| PivotFailure {
            element: i,
            condition: e.condition,
        })?;
        counter.block_factorizations += 1;
        let inv = lu.inverse();
        let upper: Vec<(usize, usize)> = a.row(i).filter(|&(pos, k)| k > i && kept[pos]).collect();
        for &(_, j) in &upper {
            // the pattern is symmetric, so (j, i) exists whenever (i, j) does
            let pos_ji = a.position(j, i).expect("symmetric pattern");
            let l = gemm(a.block_at(pos_ji), &inv, m);
            a.block_at_mut(pos_ji).copy_from_slice(&l);
            counter.block_products += 1;
            for &(pos_ik, k) in &upper {
                if k != j && !general {
                    continue;
                }
                let Some(pos_jk) = a.position(j, k).filter(|&p| kept[p]) else {
                    continue;
                };
                let u = a.block_at(pos_ik).to_vec();
                gemm_acc(&l, &u, m, -1.0, a.block_at_mut(pos_jk));
                counter.block_products += 1;
            }
        }
        lus.push(lu);
    }
    for (pos, &k) in kept.iter().enumerate() {
        if !k {
            a.block_at_mut(pos).iter_mut().for_each(|v| *v = 0.0);
        }
    }
    Ok(lus)
}

impl BlockIlu0 {
    pub fn algorithm(&self) -> IluAlgorithm {
        self.algorithm
    }

    pub fn block_size(&self) -> usize {
        self.factors.block_size()
    }

    pub fn num_block_rows(&self) -> usize {
        self.factors.num_block_rows()
    }

    pub fn dim(&self) -> usize {
        self.factors.dim()
    }

    pub fn graph(&self) -> &Arc<ElementGraph> {
        self.factors.graph()
    }

    /// Block `(i, j)` of `L̃` for `i > j` (None if outside the factor pattern).
    pub fn lower_block(&self, i: usize, j: usize) -> Option<&[f64]> {
        if i <= j {
            return None;
        }
        self.factors
            .position(i, j)
            .filter(|&p| self.kept[p])
            .map(|p| self.factors.block_at(p))
    }

    /// Block `(i, j)` of `Ũ` for `i <= j`.
    pub fn upper_block(&self, i: usize, j: usize) -> Option<&[f64]> {
        if i > j {
            return None;
        }
        self.factors
            .position(i, j)
            .filter(|&p| self.kept[p])
            .map(|p| self.factors.block_at(p))
    }

    /// Element pairs `(i, j)` present in the factor storage.
    pub fn factor_pattern(&self) -> Vec<(usize, usize)> {
        (0..self.num_block_rows())
            .flat_map(|i| self.factors.row(i).filter(|&(p, _)| self.kept[p]).map(move |(_, j)| (i, j)))
            .collect()
    }

    /// Stored m x m blocks (the memory ledger).
    pub fn stored_blocks(&self) -> usize {
        self.kept.iter().filter(|&&k| k).count()
    }

    fn stored_off_diagonal(&self) -> usize {
        self.stored_blocks() - self.num_block_rows()
    }

    /// `x = Ũ⁻¹ L̃⁻¹ y`.
    pub fn apply(&self, y: &[f64], counter: &mut OpCounter) -> Result<Vec<f64>> {
        check_len(self.dim(), y.len())?;
        let mut x = y.to_vec();
        self.apply_in_place(&mut x, counter);
        Ok(x)
    }

    fn apply_in_place(&self, x: &mut [f64], counter: &mut OpCounter) {
        let m = self.block_size();
        let t = self.num_block_rows();
        let mut acc = vec![0.0; m];
        for i in 0..t {
            acc.copy_from_slice(&x[i * m..(i + 1) * m]);
            for (pos, j) in self.factors.row(i).filter(|&(p, j)| j < i && self.kept[p]) {
                gemv_acc(self.factors.block_at(pos), &x[j * m..(j + 1) * m], -1.0, &mut acc);
            }
            x[i * m..(i + 1) * m].copy_from_slice(&acc);
        }
        for i in (0..t).rev() {
            acc.copy_from_slice(&x[i * m..(i + 1) * m]);
            for (pos, j) in self.factors.row(i).filter(|&(p, j)| j > i && self.kept[p]) {
                gemv_acc(self.factors.block_at(pos), &x[j * m..(j + 1) * m], -1.0, &mut acc);
            }
            self.diag_lu[i].solve_in_place(&mut acc);
            x[i * m..(i + 1) * m].copy_from_slice(&acc);
        }
        counter.block_multiplies += self.stored_off_diagonal() as u64;
        counter.block_solves += t as u64;
    }

    /// Dense `L̃ Ũ` (tests and diagnostics).
    pub fn product_dense(&self) -> Vec<f64> {
        let m = self.block_size();
        let t = self.num_block_rows();
        let n = t * m;
        let mut l = vec![0.0; n * n];
        let mut u = vec![0.0; n * n];
        for i in 0..t {
            for r in 0..m {
                l[(i * m + r) * n + i * m + r] = 1.0;
            }
            for (pos, j) in self.factors.row(i).filter(|&(p, _)| self.kept[p]) {
                let dst = if j < i { &mut l } else { &mut u };
                let b = self.factors.block_at(pos);
                for r in 0..m {
                    for c in 0..m {
                        dst[(i * m + r) * n + j * m + c] = b[r * m + c];
                    }
                }
            }
        }
        let mut p = vec![0.0; n * n];
        for r in 0..n {
            for k in 0..n {
                let lv = l[r * n + k];
                if lv != 0.0 {
                    for c in 0..n {
                        p[r * n + c] += lv * u[k * n + c];
                    }
                }
            }
        }
        p
    }
}

pub fn ilu0_factorize(b: &BlockSparseMatrix, counter: &mut OpCounter) -> Result<BlockIlu0> {
    ilu0_factorize_with(
        b,
        &PartitionRestriction::none(b.num_block_rows()),
        IluAlgorithm::Auto,
        counter,
    )
}

pub fn ilu0_factorize_with(
    b: &BlockSparseMatrix,
    restriction: &PartitionRestriction,
    algorithm: IluAlgorithm,
    counter: &mut OpCounter,
) -> Result<BlockIlu0> {
    if restriction.num_elements() != b.num_block_rows() {
        return Err(Error::StructureMismatch(format!(
            "partition restriction covers {} elements, matrix has {}",
            restriction.num_elements(),
            b.num_block_rows()
        )));
    }
    let simple_ok = b.graph().satisfies_simplified_ilu_condition();
    let algorithm = match algorithm {
        IluAlgorithm::Auto if simple_ok => IluAlgorithm::Simplified,
        IluAlgorithm::Auto => IluAlgorithm::General,
        IluAlgorithm::Simplified if !simple_ok => {
            return Err(Error::InvalidConfig(
                "simplified ILU(0) requested on a graph with neighboring neighbors".into(),
            ))
        }
        a => a,
    };
    let kept = kept_positions(b, restriction);
    let mut factors = b.clone();
    let diag_lu = factor_in_place(&mut factors, &kept, algorithm == IluAlgorithm::General, counter)
        .map_err(|f| Error::SingularPivot {
            element: f.element,
            condition: f.condition,
        })?;
    Ok(BlockIlu0 {
        factors,
        kept,
        diag_lu,
        algorithm,
    })
}

pub fn ilu0_apply(f: &BlockIlu0, y: &[f64], counter: &mut OpCounter) -> Result<Vec<f64>> {
    f.apply(y, counter)
}

/// Cross-stage update rule of the coupled factorization.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum CoupledUpdate {
    /// Zero-fill block LU on the stage-major ordering: every later stage block
    /// `B_{ℓq,ii}` (q, ℓ > k) receives `− B_{ℓk,ii} B_{kq,ii}`.
    #[default]
    Standard,
    /// Only the stage-diagonal pivot is updated, `B_{ℓℓ,ii} −= B_{ℓk,ii} B_{kk,ii}`.
    Literal,
}

/// ILU(0) of the full stage operator, ordered stage-major.
#[derive(Clone, Debug)]
pub struct StageCoupledIlu0 {
    stages: Vec<BlockSparseMatrix>,
    kept: Vec<bool>,
    diag_lu: Vec<Vec<BlockLu>>,
    /// `coupling[ℓ][k]` holds T element-diagonal blocks for ℓ != k (empty for ℓ = k)
    coupling: Vec<Vec<Vec<f64>>>,
    update: CoupledUpdate,
}

impl StageCoupledIlu0 {
    pub fn num_stages(&self) -> usize {
        self.stages.len()
    }

    pub fn stage_dim(&self) -> usize {
        self.stages[0].dim()
    }

    pub fn dim(&self) -> usize {
        self.num_stages() * self.stage_dim()
    }

    pub fn update_rule(&self) -> CoupledUpdate {
        self.update
    }

    pub fn stored_coupling_blocks(&self) -> usize {
        let m2 = self.stages[0].block_size().pow(2);
        self.coupling.iter().flatten().map(|c| c.len() / m2).sum()
    }

    /// Within-stage factor blocks plus coupling blocks.
    pub fn stored_blocks(&self) -> usize {
        self.num_stages() * self.kept.iter().filter(|&&k| k).count() + self.stored_coupling_blocks()
    }

    /// Factored coupling block `(ℓ, k)` at element `i`: `L` part for ℓ > k, `U` part for ℓ < k.
    pub fn coupling_block(&self, l: usize, k: usize, i: usize) -> Option<&[f64]> {
        let m2 = self.stages[0].block_size().pow(2);
        let c = self.coupling.get(l)?.get(k)?;
        c.get(i * m2..(i + 1) * m2)
    }

    pub fn apply(&self, y: &[f64], counter: &mut OpCounter) -> Result<Vec<f64>> {
        check_len(self.dim(), y.len())?;
        let s = self.num_stages();
        let n = self.stage_dim();
        let m = self.stages[0].block_size();
        let m2 = m * m;
        let t = n / m;
        let mut x = y.to_vec();
        let mut acc = vec![0.0; m];
        for k in 0..s {
            let f = &self.stages[k];
            for i in 0..t {
                acc.copy_from_slice(&x[k * n + i * m..k * n + (i + 1) * m]);
                for (pos, j) in f.row(i).filter(|&(p, j)| j < i && self.kept[p]) {
                    gemv_acc(f.block_at(pos), &x[k * n + j * m..k * n + (j + 1) * m], -1.0, &mut acc);
                }
                for l in 0..k {
                    let c = &self.coupling[k][l][i * m2..(i + 1) * m2];
                    gemv_acc(c, &x[l * n + i * m..l * n + (i + 1) * m], -1.0, &mut acc);
                }
                x[k * n + i * m..k * n + (i + 1) * m].copy_from_slice(&acc);
            }
        }
        for k in (0..s).rev() {
            let f = &self.stages[k];
            for i in (0..t).rev() {
                acc.copy_from_slice(&x[k * n + i * m..k * n + (i + 1) * m]);
                for (pos, j) in f.row(i).filter(|&(p, j)| j > i && self.kept[p]) {
                    gemv_acc(f.block_at(pos), &x[k * n + j * m..k * n + (j + 1) * m], -1.0, &mut acc);
                }
                for q in k + 1..s {
                    let c = &self.coupling[k][q][i * m2..(i + 1) * m2];
                    gemv_acc(c, &x[q * n + i * m..q * n + (i + 1) * m], -1.0, &mut acc);
                }
                self.diag_lu[k][i].solve_in_place(&mut acc);
                x[k * n + i * m..k * n + (i + 1) * m].copy_from_slice(&acc);
            }
        }
        let within = self.kept.iter().filter(|&&k| k).count() - t;
        let cross = (s * s - s) * t;
        counter.block_multiplies += (s * within + cross) as u64;
        counter.coupling_multiplies += cross as u64;
        counter.block_solves += (s * t) as u64;
        Ok(x)
    }
}

pub fn stage_coupled_factorize(
    op: &StageOperator,
    restriction: &PartitionRestriction,
    update: CoupledUpdate,
    counter: &mut OpCounter,
) -> Result<StageCoupledIlu0> {
    let s = op.stages();
    let first = op.diagonal_block(0);
    let t = first.num_block_rows();
    let m = first.block_size();
    let m2 = m * m;
    if restriction.num_elements() != t {
        return Err(Error::StructureMismatch(format!(
            "partition restriction covers {} elements, operator has {}",
            restriction.num_elements(),
            t
        )));
    }
    let general = !first.graph().satisfies_simplified_ilu_condition();
    let kept = kept_positions(first, restriction);
    let a_inv = &op.derived().a_inv;
    let mass = op.mass();
    let mut coupling: Vec<Vec<Vec<f64>>> = (0..s)
        .map(|l| {
            (0..s)
                .map(|k| {
                    if l == k {
                        return Vec::new();
                    }
                    (0..t)
                        .flat_map(|i| mass.block(i).iter().map(move |v| a_inv[l][k] * v))
                        .collect()
                })
                .collect()
        })
        .collect();
    let mut stages: Vec<BlockSparseMatrix> = (0..s).map(|k| op.diagonal_block(k).clone()).collect();
    let mut diag_lu = Vec::with_capacity(s);
    for k in 0..s {
        let (done, rest) = stages.split_at_mut(k + 1);
        let stage_k = &mut done[k];
        let lus = factor_in_place(stage_k, &kept, general, counter).map_err(|f| Error::SingularStagePivot {
            stage: k,
            element: f.element,
            condition: f.condition,
        })?;
        // cross-stage updates for the pivots (k, i); they touch only element-diagonal
        // blocks of later stages, so they commute with the within-stage sweep above
        for (i, lu) in lus.iter().enumerate() {
            let range = i * m2..(i + 1) * m2;
            let inv = lu.inverse();
            let pivot = stage_k.block_at(stage_k.diag_position(i)).to_vec();
            for l in k + 1..s {
                let lk = gemm(&coupling[l][k][range.clone()], &inv, m);
                coupling[l][k][range.clone()].copy_from_slice(&lk);
                counter.block_products += 1;
                let diag_l = &mut rest[l - k - 1];
                let pos = diag_l.diag_position(i);
                match update {
                    CoupledUpdate::Standard => {
                        for q in k + 1..s {
                            let kq = coupling[k][q][range.clone()].to_vec();
                            let target = if q == l {
                                diag_l.block_at_mut(pos)
                            } else {
                                &mut coupling[l][q][range.clone()]
                            };
                            gemm_acc(&lk, &kq, m, -1.0, target);
                            counter.block_products += 1;
                        }
                    }
                    CoupledUpdate::Literal => {
                        gemm_acc(&lk, &pivot, m, -1.0, diag_l.block_at_mut(pos));
                        counter.block_products += 1;
                    }
                }
            }
        }
        diag_lu.push(lus);
    }
    Ok(StageCoupledIlu0 {
        stages,
        kept,
        diag_lu,
        coupling,
        update,
    })
}

/// Per-stage shifts for the uncoupled factorization.
#[derive(Clone, Debug, PartialEq)]
pub enum Shifts {
    /// `α_i = Σ_{j≠i} |(A⁻¹)_{ji}|`
    Default,
    Zero,
    Custom(Vec<f64>),
}

/// Independent ILU(0) factors of `((A⁻¹)_ii + α_i) M − Δt J_i`.
#[derive(Clone, Debug)]
pub struct StageUncoupledIlu0 {
    stages: Vec<BlockIlu0>,
    shifts: Vec<f64>,
    exec: Execution,
}

impl StageUncoupledIlu0 {
    pub fn num_stages(&self) -> usize {
        self.stages.len()
    }

    pub fn shifts(&self) -> &[f64] {
        &self.shifts
    }

    pub fn stage(&self, i: usize) -> &BlockIlu0 {
        &self.stages[i]
    }

    pub fn stored_blocks(&self) -> usize {
        self.stages.iter().map(BlockIlu0::stored_blocks).sum()
    }

    pub fn dim(&self) -> usize {
        self.stages.iter().map(BlockIlu0::dim).sum()
    }

    pub fn apply(&self, y: &[f64], counter: &mut OpCounter) -> Result<Vec<f64>> {
        check_len(self.dim(), y.len())?;
        let n = self.stages[0].dim();
        let parts = self.exec.map_stages(self.num_stages(), |i| {
            let mut c = OpCounter::default();
            let mut xi = y[i * n..(i + 1) * n].to_vec();
            self.stages[i].apply_in_place(&mut xi, &mut c);
            (xi, c)
        });
        let mut x = Vec::with_capacity(y.len());
        for (xi, c) in parts {
            x.extend(xi);
            *counter += c;
        }
        Ok(x)
    }
}

pub fn stage_uncoupled_factorize(
    op: &StageOperator,
    shifts: &Shifts,
    restriction: &PartitionRestriction,
    exec: &Execution,
    counter: &mut OpCounter,
) -> Result<StageUncoupledIlu0> {
    let s = op.stages();
    let shifts = match shifts {
        Shifts::Default => op.derived().shifts.clone(),
        Shifts::Zero => vec![0.0; s],
        Shifts::Custom(v) if v.len() == s => v.clone(),
        Shifts::Custom(v) => {
            return Err(Error::DimensionMismatch {
                expected: s,
                got: v.len(),
            })
        }
    };
    let results = exec.map_stages(s, |i| {
        let mut c = OpCounter::default();
        let shifted = op.diagonal_block(i).scaled_plus_mass(1.0, op.mass(), shifts[i])?;
        let f = ilu0_factorize_with(&shifted, restriction, IluAlgorithm::Auto, &mut c).map_err(|e| match e {
            Error::SingularPivot { element, condition } => Error::SingularStagePivot {
                stage: i,
                element,
                condition,
            },
            other => other,
        })?;
        Ok((f, c))
    });
    let mut stages = Vec::with_capacity(s);
    for r in results {
        let (f, c) = r?;
        *counter += c;
        stages.push(f);
    }
    Ok(StageUncoupledIlu0 {
        stages,
        shifts,
        exec: exec.clone(),
    })
}

/// Preconditioner selection (CLI names in `FromStr`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PrecondKind {
    /// Plain block ILU(0) of each DIRK stage matrix.
    DirkIlu,
    Coupled,
    Uncoupled,
    UncoupledUnshifted,
    /// Coupled factorization with every element in its own partition.
    BlockJacobi,
}

impl PrecondKind {
    pub const ALL: [PrecondKind; 5] = [
        PrecondKind::DirkIlu,
        PrecondKind::Coupled,
        PrecondKind::Uncoupled,
        PrecondKind::UncoupledUnshifted,
        PrecondKind::BlockJacobi,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PrecondKind::DirkIlu => "dirk-ilu",
            PrecondKind::Coupled => "coupled",
            PrecondKind::Uncoupled => "uncoupled",
            PrecondKind::UncoupledUnshifted => "uncoupled-unshifted",
            PrecondKind::BlockJacobi => "block-jacobi",
        }
    }
}

impl std::fmt::Display for PrecondKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PrecondKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PrecondKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown preconditioner `{s}`")))
    }
}

/// A factored preconditioner for the transformed stage system.
#[derive(Clone, Debug)]
pub enum StagePreconditioner {
    Coupled(StageCoupledIlu0),
    Uncoupled(StageUncoupledIlu0),
}

impl StagePreconditioner {
    pub fn apply(&self, y: &[f64], counter: &mut OpCounter) -> Result<Vec<f64>> {
        match self {
            StagePreconditioner::Coupled(f) => f.apply(y, counter),
            StagePreconditioner::Uncoupled(f) => f.apply(y, counter),
        }
    }

    pub fn stored_blocks(&self) -> usize {
        match self {
            StagePreconditioner::Coupled(f) => f.stored_blocks(),
            StagePreconditioner::Uncoupled(f) => f.stored_blocks(),
        }
    }
}

/// Builds the preconditioner `kind` for the stage operator. `partitioned`
/// carries the partition assignment used for restriction.
pub fn build_stage_preconditioner(
    kind: PrecondKind,
    op: &StageOperator,
    partitioned: &ElementGraph,
    update: CoupledUpdate,
    exec: &Execution,
    counter: &mut OpCounter,
) -> Result<StagePreconditioner> {
    let restriction = restrict_to_partitions(partitioned);
    match kind {
        PrecondKind::Coupled => Ok(StagePreconditioner::Coupled(stage_coupled_factorize(
            op,
            &restriction,
            update,
            counter,
        )?)),
        PrecondKind::BlockJacobi => {
            let t = partitioned.num_elements();
            let jacobi = restrict_to_partitions(&partitioned.partition(t)?);
            Ok(StagePreconditioner::Coupled(stage_coupled_factorize(op, &jacobi, update, counter)?))
        }
        PrecondKind::Uncoupled => Ok(StagePreconditioner::Uncoupled(stage_uncoupled_factorize(
            op,
            &Shifts::Default,
            &restriction,
            exec,
            counter,
        )?)),
        PrecondKind::UncoupledUnshifted => Ok(StagePreconditioner::Uncoupled(stage_uncoupled_factorize(
            op,
            &Shifts::Zero,
            &restriction,
            exec,
            counter,
        )?)),
        PrecondKind::DirkIlu => Err(Error::InvalidConfig(
            "dirk-ilu applies to diagonally implicit schemes only".into(),
        )),
    }
}
