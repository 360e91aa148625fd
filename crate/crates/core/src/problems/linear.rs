use std::sync::Arc;

use serde::{Deserialize, Serialize};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mesh_blocks::{BlockDiagonalMatrix, BlockSparseMatrix, ElementGraph};

use super::SemidiscreteProblem;

/// `Λ = −P + S`: `P` block diagonal SPD with eigenvalues in
/// `[decay_min, decay_max]`, `S` skew-symmetric on the line-graph pattern
/// with entries of size `oscillation`. The symmetric part of `Λ` is `−P`, so
/// every eigenvalue has real part in `[−decay_max, −decay_min]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearOdeSpec {
    pub elements: usize,
    pub block_size: usize,
    pub decay_min: f64,
    pub decay_max: f64,
    pub oscillation: f64,
    pub periodic: bool,
    pub seed: u64,
}

impl Default for LinearOdeSpec {
    fn default() -> Self {
        LinearOdeSpec {
            elements: 4,
            block_size: 2,
            decay_min: 0.5,
            decay_max: 2.0,
            oscillation: 1.0,
            periodic: false,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LinearBlockOde {
    spec: LinearOdeSpec,
    lambda: BlockSparseMatrix,
    dense: DMatrix<f64>,
    u0: Vec<f64>,
    mass: Arc<BlockDiagonalMatrix>,
}

fn random_orthogonal(m: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(m, m, |_, _| rng.gen_range(-1.0..1.0));
    a.qr().q()
}

pub fn make_linear_block_ode(spec: LinearOdeSpec) -> Result<LinearBlockOde> {
    let (t, m) = (spec.elements, spec.block_size);
    if t == 0 || m == 0 {
        return Err(Error::InvalidConfig("linear ODE needs at least one element and block size 1".into()));
    }
    if !(spec.decay_min >= 0.0 && spec.decay_max >= spec.decay_min) || !(spec.oscillation >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "spectrum needs 0 <= decay_min <= decay_max and oscillation >= 0, got {:?}",
            (spec.decay_min, spec.decay_max, spec.oscillation)
        )));
    }
    let graph = Arc::new(match t {
        1 => ElementGraph::from_adjacency(vec![vec![]])?,
        2 | 3 => ElementGraph::build_line_mesh(t, false)?,
        _ => ElementGraph::build_line_mesh(t, spec.periodic)?,
    });
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut lambda = BlockSparseMatrix::zeros(graph.clone(), m);
    for i in 0..t {
        let q = random_orthogonal(m, &mut rng);
        let eig = DVector::from_fn(m, |k, _| {
            if m == 1 {
                spec.decay_min
            } else {
                spec.decay_min + (spec.decay_max - spec.decay_min) * k as f64 / (m - 1) as f64
            }
        });
        let p = &q * DMatrix::from_diagonal(&eig) * q.transpose();
        let raw = DMatrix::from_fn(m, m, |_, _| rng.gen_range(-1.0..1.0));
        let skew = (&raw - raw.transpose()) * (0.5 * spec.oscillation);
        let block = lambda.block_mut(i, i).expect("diagonal block");
        for r in 0..m {
            for c in 0..m {
                block[r * m + c] = -p[(r, c)] + skew[(r, c)];
            }
        }
    }
    for i in 0..t {
        for &j in graph.neighbors(i).iter().filter(|&&j| j > i) {
            let s: Vec<f64> = (0..m * m).map(|_| spec.oscillation * rng.gen_range(-1.0..1.0)).collect();
            lambda.block_mut(i, j).expect("pattern").copy_from_slice(&s);
            let back = lambda.block_mut(j, i).expect("pattern");
            for r in 0..m {
                for c in 0..m {
                    back[r * m + c] = -s[c * m + r];
                }
            }
        }
    }
    let n = t * m;
    let dense = DMatrix::from_row_slice(n, n, &lambda.to_dense());
    let u0: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Ok(LinearBlockOde {
        spec,
        lambda,
        dense,
        u0,
        mass: Arc::new(BlockDiagonalMatrix::identity(t, m)),
    })
}

impl LinearBlockOde {
    pub fn spec(&self) -> &LinearOdeSpec {
        &self.spec
    }

    /// `Λ` as a dense matrix.
    pub fn operator_dense(&self) -> &DMatrix<f64> {
        &self.dense
    }

    pub fn with_initial_state(mut self, u0: Vec<f64>) -> Result<Self> {
        if u0.len() != self.u0.len() {
            return Err(Error::DimensionMismatch {
                expected: self.u0.len(),
                got: u0.len(),
            });
        }
        self.u0 = u0;
        Ok(self)
    }
}

impl SemidiscreteProblem for LinearBlockOde {
    fn name(&self) -> String {
        format!("linear-ode(T={},m={})", self.spec.elements, self.spec.block_size)
    }

    fn graph(&self) -> &Arc<ElementGraph> {
        self.lambda.graph()
    }

    fn block_size(&self) -> usize {
        self.spec.block_size
    }

    fn mass(&self) -> &Arc<BlockDiagonalMatrix> {
        &self.mass
    }

    fn rhs(&self, _t: f64, u: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; u.len()];
        self.lambda.matvec_acc(u, 1.0, &mut y, &mut Default::default());
        y
    }

    fn jacobian(&self, _t: f64, _u: &[f64]) -> BlockSparseMatrix {
        self.lambda.clone()
    }

    fn initial_state(&self) -> Vec<f64> {
        self.u0.clone()
    }

    /// `exp(tΛ) u₀` by the dense matrix exponential.
    fn exact(&self, t: f64) -> Option<Vec<f64>> {
        let e = (&self.dense * t).exp();
        Some((e * DVector::from_column_slice(&self.u0)).iter().copied().collect())
    }
}
