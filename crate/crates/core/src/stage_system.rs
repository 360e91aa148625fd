//! The transformed stage operator `B = A⁻¹ ⊗ M − Δt blkdiag(J₁, …, J_s)`,
//! the untransformed operator `I ⊗ M − Δt [a_ij J_i]` used as a reference,
//! and the maps between stage increments `K` and transformed variables `W`.
//!
//! Stage vectors are laid out stage-major: all of stage 1, then stage 2, ...

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::mesh_blocks::{check_len, BlockDiagonalMatrix, BlockSparseMatrix, OpCounter};
use crate::tableaux::{ButcherTableau, TableauDerived};

fn check_stage_structure(mass: &BlockDiagonalMatrix, jacobians: &[BlockSparseMatrix]) -> Result<()> {
    let first = jacobians
        .first()
        .ok_or_else(|| Error::StructureMismatch("no stage Jacobians given".into()))?;
    for (i, jac) in jacobians.iter().enumerate() {
        if !jac.graph().same_pattern(first.graph()) || jac.block_size() != first.block_size() {
            return Err(Error::StructureMismatch(format!(
                "Jacobian of stage {i} differs in graph or block size from stage 0"
            )));
        }
    }
    if mass.num_blocks() != first.num_block_rows() || mass.block_size() != first.block_size() {
        return Err(Error::StructureMismatch("mass matrix does not match the Jacobian blocks".into()));
    }
    Ok(())
}

/// Transformed Newton matrix. The stage-diagonal blocks
/// `(A⁻¹)_ii M − Δt J_i` are assembled once; off-diagonal stage blocks are
/// applied as scaled mass products.
#[derive(Clone, Debug)]
pub struct StageOperator {
    derived: TableauDerived,
    dt: f64,
    mass: Arc<BlockDiagonalMatrix>,
    diag: Vec<BlockSparseMatrix>,
}

impl StageOperator {
    pub fn new(
        derived: TableauDerived,
        dt: f64,
        mass: Arc<BlockDiagonalMatrix>,
        jacobians: &[BlockSparseMatrix],
    ) -> Result<Self> {
        check_stage_structure(&mass, jacobians)?;
        if jacobians.len() != derived.stages() {
            return Err(Error::StructureMismatch(format!(
                "{} Jacobians for a {}-stage tableau",
                jacobians.len(),
                derived.stages()
            )));
        }
        let diag = jacobians
            .iter()
            .enumerate()
            .map(|(i, j)| j.scaled_plus_mass(-dt, &mass, derived.a_inv[i][i]))
            .collect::<Result<Vec<_>>>()?;
        Ok(StageOperator {
            derived,
            dt,
            mass,
            diag,
        })
    }

    pub fn stages(&self) -> usize {
        self.diag.len()
    }

    /// Per-stage dimension n = T m.
    pub fn stage_dim(&self) -> usize {
        self.mass.dim()
    }

    pub fn dim(&self) -> usize {
        self.stages() * self.stage_dim()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn derived(&self) -> &TableauDerived {
        &self.derived
    }

    pub fn mass(&self) -> &Arc<BlockDiagonalMatrix> {
        &self.mass
    }

    /// `(A⁻¹)_ii M − Δt J_i`.
    pub fn diagonal_block(&self, i: usize) -> &BlockSparseMatrix {
        &self.diag[i]
    }

    /// Number of stored Jacobian-pattern m x m blocks, s (r+1) T on uniform meshes.
    pub fn stored_jacobian_blocks(&self) -> usize {
        self.diag.iter().map(BlockSparseMatrix::num_stored_blocks).sum()
    }

    fn apply_stage(&self, i: usize, w: &[f64]) -> (Vec<f64>, OpCounter) {
        let n = self.stage_dim();
        let mut counter = OpCounter::default();
        let mut y = vec![0.0; n];
        self.diag[i].matvec_acc(&w[i * n..(i + 1) * n], 1.0, &mut y, &mut counter);
        for j in (0..self.stages()).filter(|&j| j != i) {
            self.mass
                .matvec_acc(&w[j * n..(j + 1) * n], self.derived.a_inv[i][j], &mut y, &mut counter);
            counter.coupling_multiplies += self.mass.num_blocks() as u64;
        }
        (y, counter)
    }

    /// `y_i = Σ_j (A⁻¹)_ij M w_j − Δt J_i w_i`.
    pub fn apply(&self, w: &[f64], counter: &mut OpCounter) -> Result<Vec<f64>> {
        self.apply_with(w, counter, &Execution::Serial)
    }

    /// As [`StageOperator::apply`], with one task per stage.
    pub fn apply_with(&self, w: &[f64], counter: &mut OpCounter, exec: &Execution) -> Result<Vec<f64>> {
        check_len(self.dim(), w.len())?;
        let parts = exec.map_stages(self.stages(), |i| self.apply_stage(i, w));
        let mut y = Vec::with_capacity(self.dim());
        for (yi, c) in parts {
            y.extend(yi);
            *counter += c;
        }
        Ok(y)
    }

    /// Dense row-major assembly (tests and oracles).
    pub fn to_dense(&self) -> Vec<f64> {
        let (s, n) = (self.stages(), self.stage_dim());
        let big = s * n;
        let m = self.mass.block_size();
        let mut d = vec![0.0; big * big];
        for k in 0..s {
            let dk = self.diag[k].to_dense();
            for r in 0..n {
                for c in 0..n {
                    d[(k * n + r) * big + k * n + c] = dk[r * n + c];
                }
            }
            for l in (0..s).filter(|&l| l != k) {
                let coef = self.derived.a_inv[k][l];
                for e in 0..self.mass.num_blocks() {
                    let b = self.mass.block(e);
                    for r in 0..m {
                        for c in 0..m {
                            d[(k * n + e * m + r) * big + l * n + e * m + c] = coef * b[r * m + c];
                        }
                    }
                }
            }
        }
        d
    }
}

/// Newton matrix of the stage equations in the original increments `K`.
#[derive(Clone, Debug)]
pub struct UntransformedOperator {
    a: Vec<Vec<f64>>,
    dt: f64,
    mass: Arc<BlockDiagonalMatrix>,
    jacobians: Vec<BlockSparseMatrix>,
    /// `M − Δt a_ii J_i`
    diag: Vec<BlockSparseMatrix>,
}

impl UntransformedOperator {
    pub fn new(
        tableau: &ButcherTableau,
        dt: f64,
        mass: Arc<BlockDiagonalMatrix>,
        jacobians: Vec<BlockSparseMatrix>,
    ) -> Result<Self> {
        check_stage_structure(&mass, &jacobians)?;
        if jacobians.len() != tableau.stages() {
            return Err(Error::StructureMismatch(format!(
                "{} Jacobians for a {}-stage tableau",
                jacobians.len(),
                tableau.stages()
            )));
        }
        let diag = jacobians
            .iter()
            .enumerate()
            .map(|(i, j)| j.scaled_plus_mass(-dt * tableau.a[i][i], &mass, 1.0))
            .collect::<Result<Vec<_>>>()?;
        Ok(UntransformedOperator {
            a: tableau.a.clone(),
            dt,
            mass,
            jacobians,
            diag,
        })
    }

    pub fn stages(&self) -> usize {
        self.jacobians.len()
    }

    pub fn stage_dim(&self) -> usize {
        self.mass.dim()
    }

    pub fn dim(&self) -> usize {
        self.stages() * self.stage_dim()
    }

    pub fn diagonal_block(&self, i: usize) -> &BlockSparseMatrix {
        &self.diag[i]
    }

    /// `y_i = M k_i − Δt Σ_j a_ij J_i k_j`.
    pub fn apply(&self, k: &[f64], counter: &mut OpCounter) -> Result<Vec<f64>> {
        check_len(self.dim(), k.len())?;
        let (s, n) = (self.stages(), self.stage_dim());
        let mut y = vec![0.0; self.dim()];
        for i in 0..s {
            let yi = &mut y[i * n..(i + 1) * n];
            self.diag[i].matvec_acc(&k[i * n..(i + 1) * n], 1.0, yi, counter);
            for j in (0..s).filter(|&j| j != i) {
                self.jacobians[i].matvec_acc(&k[j * n..(j + 1) * n], -self.dt * self.a[i][j], yi, counter);
            }
        }
        Ok(y)
    }
}

fn kron_apply(coef: &[Vec<f64>], v: &[f64]) -> Result<Vec<f64>> {
    let s = coef.len();
    if s == 0 || v.len() % s != 0 {
        return Err(Error::DimensionMismatch {
            expected: s * (v.len() / s.max(1)).max(1),
            got: v.len(),
        });
    }
    let n = v.len() / s;
    let mut out = vec![0.0; v.len()];
    for i in 0..s {
        for j in 0..s {
            let a = coef[i][j];
            if a == 0.0 {
                continue;
            }
            for (o, x) in out[i * n..(i + 1) * n].iter_mut().zip(&v[j * n..(j + 1) * n]) {
                *o += a * x;
            }
        }
    }
    Ok(out)
}

/// `W = (A ⊗ I) K`.
pub fn k_to_w(tableau: &ButcherTableau, k: &[f64]) -> Result<Vec<f64>> {
    kron_apply(&tableau.a, k)
}

/// `K = (A⁻¹ ⊗ I) W`.
pub fn w_to_k(derived: &TableauDerived, w: &[f64]) -> Result<Vec<f64>> {
    kron_apply(&derived.a_inv, w)
}
