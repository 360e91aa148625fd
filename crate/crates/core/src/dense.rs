//! Small dense kernels on row-major `m x m` blocks stored as flat slices.

/// `y += alpha * a * x` for a square block `a` of order `x.len()`.
#[inline]
pub fn gemv_acc(a: &[f64], x: &[f64], alpha: f64, y: &mut [f64]) {
    let m = x.len();
    debug_assert_eq!(a.len(), m * m);
    for (r, yr) in y.iter_mut().enumerate() {
        let row = &a[r * m..(r + 1) * m];
        let mut acc = 0.0;
        for (aij, xj) in row.iter().zip(x) {
            acc += aij * xj;
        }
        *yr += alpha * acc;
    }
}

/// `c = a * b`.
pub fn gemm(a: &[f64], b: &[f64], m: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * m];
    gemm_acc(a, b, m, 1.0, &mut c);
    c
}

/// `c += alpha * a * b`.
pub fn gemm_acc(a: &[f64], b: &[f64], m: usize, alpha: f64, c: &mut [f64]) {
    for i in 0..m {
        for k in 0..m {
            let aik = alpha * a[i * m + k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..m {
                c[i * m + j] += aik * b[k * m + j];
            }
        }
    }
}

pub fn identity(m: usize) -> Vec<f64> {
    let mut e = vec![0.0; m * m];
    for i in 0..m {
        e[i * m + i] = 1.0;
    }
    e
}

fn norm1(a: &[f64], m: usize) -> f64 {
    (0..m)
        .map(|j| (0..m).map(|i| a[i * m + j].abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// LU factorization with partial pivoting of one dense block.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockLu {
    m: usize,
    lu: Vec<f64>,
    piv: Vec<usize>,
}

/// Returned by [`BlockLu::factor`] when the block is numerically singular.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SingularBlock {
    pub condition: f64,
}

pub const MAX_CONDITION: f64 = 1e14;

impl BlockLu {
    /// Factors `a`; rejects blocks whose 1-norm condition number exceeds 1e14.
    pub fn factor(a: &[f64], m: usize) -> Result<Self, SingularBlock> {
        debug_assert_eq!(a.len(), m * m);
        let mut lu = a.to_vec();
        let mut piv: Vec<usize> = (0..m).collect();
        for k in 0..m {
            let (p, pmax) = (k..m)
                .map(|i| (i, lu[i * m + k].abs()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pmax == 0.0 || !pmax.is_finite() {
                return Err(SingularBlock {
                    condition: f64::INFINITY,
                });
            }
            if p != k {
                for j in 0..m {
                    lu.swap(k * m + j, p * m + j);
                }
                piv.swap(k, p);
            }
            let pivot = lu[k * m + k];
            for i in k + 1..m {
                let l = lu[i * m + k] / pivot;
                lu[i * m + k] = l;
                if l != 0.0 {
                    for j in k + 1..m {
                        lu[i * m + j] -= l * lu[k * m + j];
                    }
                }
            }
        }
        let f = BlockLu { m, lu, piv };
        let condition = norm1(a, m) * norm1(&f.inverse(), m);
        if !condition.is_finite() || condition > MAX_CONDITION {
            return Err(SingularBlock { condition });
        }
        Ok(f)
    }

    pub fn order(&self) -> usize {
        self.m
    }

    /// Overwrites `x` with `A^{-1} x`.
    pub fn solve_in_place(&self, x: &mut [f64]) {
        let m = self.m;
        let mut y: Vec<f64> = self.piv.iter().map(|&p| x[p]).collect();
        for i in 0..m {
            let mut acc = y[i];
            for j in 0..i {
                acc -= self.lu[i * m + j] * y[j];
            }
            y[i] = acc;
        }
        for i in (0..m).rev() {
            let mut acc = y[i];
            for j in i + 1..m {
                acc -= self.lu[i * m + j] * y[j];
            }
            y[i] = acc / self.lu[i * m + i];
        }
        x.copy_from_slice(&y);
    }

    pub fn inverse(&self) -> Vec<f64> {
        let m = self.m;
        let mut inv = vec![0.0; m * m];
        let mut col = vec![0.0; m];
        for j in 0..m {
            col.iter_mut().for_each(|v| *v = 0.0);
            col[j] = 1.0;
            self.solve_in_place(&mut col);
            for i in 0..m {
                inv[i * m + j] = col[i];
            }
        }
        inv
    }

    /// Overwrites `b` with `b A^{-1}`.
    pub fn right_divide(&self, b: &mut [f64]) {
        let m = self.m;
        let inv = self.inverse();
        let prod = gemm(b, &inv, m);
        b.copy_from_slice(&prod);
    }
}

/// Dense Cholesky check: true iff `a` is symmetric and positive definite.
pub fn is_spd(a: &[f64], m: usize) -> bool {
    let scale = a.iter().fold(0.0f64, |s, v| s.max(v.abs())).max(f64::MIN_POSITIVE);
    for i in 0..m {
        for j in 0..i {
            if (a[i * m + j] - a[j * m + i]).abs() > 1e-12 * scale {
                return false;
            }
        }
    }
    let mut l = vec![0.0; m * m];
    for j in 0..m {
        let mut d = a[j * m + j];
        for k in 0..j {
            d -= l[j * m + k] * l[j * m + k];
        }
        if d <= 0.0 {
            return false;
        }
        let d = d.sqrt();
        l[j * m + j] = d;
        for i in j + 1..m {
            let mut v = a[i * m + j];
            for k in 0..j {
                v -= l[i * m + k] * l[j * m + k];
            }
            l[i * m + j] = v / d;
        }
    }
    true
}

/// Solves a small dense real system by Gaussian elimination with partial pivoting.
/// Returns `None` when a zero pivot is met.
pub fn solve_dense(a: &[f64], b: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut a = a.to_vec();
    let mut x = b.to_vec();
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| a[i * n + k].abs().total_cmp(&a[j * n + k].abs()))?;
        if a[p * n + k] == 0.0 {
            return None;
        }
        if p != k {
            for j in 0..n {
                a.swap(k * n + j, p * n + j);
            }
            x.swap(k, p);
        }
        for i in k + 1..n {
            let l = a[i * n + k] / a[k * n + k];
            for j in k..n {
                a[i * n + j] -= l * a[k * n + j];
            }
            x[i] -= l * x[k];
        }
    }
    for i in (0..n).rev() {
        let mut acc = x[i];
        for j in i + 1..n {
            acc -= a[i * n + j] * x[j];
        }
        x[i] = acc / a[i * n + i];
    }
    Some(x)
}
