//! Preconditioned GMRES (modified Gram-Schmidt Arnoldi, Givens rotations).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum PrecondSide {
    /// Solve `P⁻¹ B x = P⁻¹ b`; the stopping test uses the preconditioned residual.
    #[default]
    Left,
    /// Solve `B P⁻¹ u = b`, `x = P⁻¹ u`; the stopping test uses the true residual.
    Right,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GmresConfig {
    pub rel_tol: f64,
    pub max_iters: usize,
    /// Restart length; `None` runs full GMRES.
    pub restart: Option<usize>,
    pub side: PrecondSide,
}

impl Default for GmresConfig {
    fn default() -> Self {
        GmresConfig {
            rel_tol: 1e-5,
            max_iters: 500,
            restart: None,
            side: PrecondSide::Left,
        }
    }
}

impl GmresConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0) {
            return Err(Error::InvalidConfig(format!("GMRES rel_tol must be positive, got {}", self.rel_tol)));
        }
        if self.max_iters == 0 || self.restart == Some(0) {
            return Err(Error::InvalidConfig("GMRES max_iters and restart must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GmresStats {
    pub iterations: usize,
    pub operator_applies: usize,
    pub precond_applies: usize,
    /// Residual norm used by the stopping test, initial value first.
    pub residual_history: Vec<f64>,
    pub converged: bool,
    /// `‖b − B x‖₂` recomputed at exit.
    pub true_residual: f64,
}

impl GmresStats {
    /// Last residual over the first one (0 for a zero right-hand side).
    pub fn relative_residual(&self) -> f64 {
        match (self.residual_history.first(), self.residual_history.last()) {
            (Some(&r0), Some(&r)) if r0 > 0.0 => r / r0,
            _ => 0.0,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn checked(v: Vec<f64>, n: usize) -> Result<Vec<f64>> {
    if v.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: v.len(),
        });
    }
    Ok(v)
}

/// Solves `B x = b` from `x₀ = 0`.
///
/// Left preconditioning stops when `‖P⁻¹(b − Bx)‖ ≤ rel_tol ‖P⁻¹b‖`. A
/// happy breakdown of the Arnoldi process counts as convergence. Running
/// out of iterations is not an error: the last iterate is returned with
/// `converged = false`.
pub fn gmres<A, P>(mut apply_op: A, mut apply_pc: P, rhs: &[f64], cfg: &GmresConfig) -> Result<(Vec<f64>, GmresStats)>
where
    A: FnMut(&[f64]) -> Result<Vec<f64>>,
    P: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    cfg.validate()?;
    let n = rhs.len();
    let mut stats = GmresStats::default();
    let mut x = vec![0.0; n];
    if rhs.iter().all(|&v| v == 0.0) {
        stats.converged = true;
        stats.residual_history.push(0.0);
        return Ok((x, stats));
    }
    let left = cfg.side == PrecondSide::Left;

    let mut r = if left {
        stats.precond_applies += 1;
        checked(apply_pc(rhs)?, n)?
    } else {
        rhs.to_vec()
    };
    let beta0 = norm(&r);
    if !beta0.is_finite() {
        return Err(Error::NonFinite("GMRES right-hand side".into()));
    }
    let target = cfg.rel_tol * beta0;
    let breakdown_tol = 1e-14 * beta0;
    let cycle_len = cfg.restart.unwrap_or(cfg.max_iters).min(cfg.max_iters);

    loop {
        let beta = norm(&r);
        stats.residual_history.push(beta);
        if beta <= target {
            stats.converged = true;
            break;
        }
        let mut basis: Vec<Vec<f64>> = vec![r.iter().map(|v| v / beta).collect()];
        let mut hess: Vec<Vec<f64>> = Vec::new();
        let mut cs: Vec<f64> = Vec::new();
        let mut sn: Vec<f64> = Vec::new();
        let mut g = vec![beta];
        let mut happy = false;

        for j in 0..cycle_len {
            let mut w = if left {
                let bv = checked(apply_op(&basis[j])?, n)?;
                stats.precond_applies += 1;
                checked(apply_pc(&bv)?, n)?
            } else {
                let pv = checked(apply_pc(&basis[j])?, n)?;
                stats.precond_applies += 1;
                checked(apply_op(&pv)?, n)?
            };
            stats.operator_applies += 1;
            stats.iterations += 1;

            let mut h = vec![0.0; j + 2];
            for (i, v) in basis.iter().enumerate() {
                let hij = dot(&w, v);
                h[i] = hij;
                axpy(-hij, v, &mut w);
            }
            let mut wn = norm(&w);
            let loss = basis.iter().map(|v| dot(&w, v).abs()).fold(0.0, f64::max);
            if loss > 1e-8 * wn.max(f64::MIN_POSITIVE) {
                for (i, v) in basis.iter().enumerate() {
                    let c = dot(&w, v);
                    h[i] += c;
                    axpy(-c, v, &mut w);
                }
                wn = norm(&w);
            }
            h[j + 1] = wn;

            for i in 0..j {
                let (a, b) = (h[i], h[i + 1]);
                h[i] = cs[i] * a + sn[i] * b;
                h[i + 1] = -sn[i] * a + cs[i] * b;
            }
            let rho = h[j].hypot(h[j + 1]);
            let (c, s) = if rho == 0.0 { (1.0, 0.0) } else { (h[j] / rho, h[j + 1] / rho) };
            h[j] = rho;
            h[j + 1] = 0.0;
            cs.push(c);
            sn.push(s);
            g.push(-s * g[j]);
            g[j] *= c;
            hess.push(h);

            let res = g[j + 1].abs();
            stats.residual_history.push(res);
            if !res.is_finite() {
                return Err(Error::NonFinite("GMRES residual".into()));
            }
            if wn < breakdown_tol {
                happy = true;
                break;
            }
            if res <= target || stats.iterations >= cfg.max_iters {
                break;
            }
            basis.push(w.iter().map(|v| v / wn).collect());
        }

        // back substitution on the triangular Hessenberg factor
        let k = hess.len();
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let mut acc = g[i];
            for (jj, yj) in y.iter().enumerate().skip(i + 1) {
                acc -= hess[jj][i] * yj;
            }
            y[i] = acc / hess[i][i];
        }
        let mut update = vec![0.0; n];
        for (yi, v) in y.iter().zip(&basis) {
            axpy(*yi, v, &mut update);
        }
        if left {
            axpy(1.0, &update, &mut x);
        } else {
            let pu = checked(apply_pc(&update)?, n)?;
            stats.precond_applies += 1;
            axpy(1.0, &pu, &mut x);
        }

        let last = *stats.residual_history.last().unwrap_or(&beta);
        if happy || last <= target {
            stats.converged = true;
            break;
        }
        if stats.iterations >= cfg.max_iters {
            break;
        }
        // restart from the recomputed residual
        let bx = checked(apply_op(&x)?, n)?;
        stats.operator_applies += 1;
        let raw: Vec<f64> = rhs.iter().zip(&bx).map(|(b, v)| b - v).collect();
        r = if left {
            stats.precond_applies += 1;
            checked(apply_pc(&raw)?, n)?
        } else {
            raw
        };
        // the recomputed residual replaces the estimate at the restart point
        stats.residual_history.pop();
    }

    let bx = checked(apply_op(&x)?, n)?;
    stats.operator_applies += 1;
    stats.true_residual = rhs.iter().zip(&bx).map(|(b, v)| (b - v) * (b - v)).sum::<f64>().sqrt();
    Ok((x, stats))
}

/// Equivalent n x n multiplications per linear solve: the mean GMRES
/// iteration count over `stats` times `stages`. For a coupled IRK solve
/// `stages` is s, since one stage-operator product is s block matvecs; for a
/// DIRK step it is the number of implicit stages, each solved separately.
pub fn equivalent_multiplications(stats: &[GmresStats], stages: usize) -> f64 {
    if stats.is_empty() {
        return 0.0;
    }
    let total: usize = stats.iter().map(|s| s.iterations).sum();
    total as f64 / stats.len() as f64 * stages as f64
}
