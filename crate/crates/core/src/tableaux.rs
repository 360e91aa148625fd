//! Butcher tableaux: the built-in L-stable schemes, a general Radau IIA
//! generator, derived quantities used by the transformed stage system, and
//! order-condition checks.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dense::solve_dense;
use crate::error::{Error, Result};
use crate::quadrature::{gauss_legendre, legendre};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SchemeKind {
    FullyImplicit,
    Dirk,
    Esdirk,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ButcherTableau {
    pub name: String,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub order: usize,
    pub stage_order: usize,
    pub kind: SchemeKind,
    /// Tabulated |leading error coefficient| of the stability function, when known.
    pub leading_error_coefficient: Option<f64>,
}

impl ButcherTableau {
    pub fn stages(&self) -> usize {
        self.b.len()
    }

    /// Stages that require a nonlinear solve.
    pub fn implicit_stages(&self) -> usize {
        match self.kind {
            SchemeKind::FullyImplicit => self.stages(),
            SchemeKind::Dirk | SchemeKind::Esdirk => {
                self.a.iter().enumerate().filter(|(i, row)| row[*i] != 0.0).count()
            }
        }
    }

    pub fn is_diagonally_implicit(&self) -> bool {
        matches!(self.kind, SchemeKind::Dirk | SchemeKind::Esdirk)
    }

    /// c_s = 1 and b_j = a_{sj}.
    pub fn is_stiffly_accurate(&self, tol: f64) -> bool {
        let s = self.stages();
        (self.c[s - 1] - 1.0).abs() <= tol
            && self.b.iter().zip(&self.a[s - 1]).all(|(b, a)| (b - a).abs() <= tol)
    }

    pub fn max_row_sum_defect(&self) -> f64 {
        self.a
            .iter()
            .zip(&self.c)
            .map(|(row, c)| (row.iter().sum::<f64>() - c).abs())
            .fold(0.0, f64::max)
    }

    pub fn consistency_defect(&self) -> f64 {
        (self.b.iter().sum::<f64>() - 1.0).abs()
    }

    fn a_flat(&self) -> Vec<f64> {
        self.a.iter().flatten().copied().collect()
    }
}

/// Quantities derived from an invertible Butcher matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableauDerived {
    pub a_inv: Vec<Vec<f64>>,
    pub bt_a_inv: Vec<f64>,
    /// alpha_i = sum_{j != i} |(A^{-1})_{ji}|
    pub shifts: Vec<f64>,
}

impl TableauDerived {
    pub fn stages(&self) -> usize {
        self.shifts.len()
    }

    /// True when b^T A^{-1} = e_s^T to `tol`, so the update reduces to the last stage.
    pub fn update_is_last_stage(&self, tol: f64) -> bool {
        let s = self.stages();
        self.bt_a_inv
            .iter()
            .enumerate()
            .all(|(j, v)| (v - if j + 1 == s { 1.0 } else { 0.0 }).abs() <= tol)
    }
}

pub const BUILTIN_SCHEMES: [&str; 6] = ["RADAU23", "RADAU35", "RADAU47", "RADAU59", "DIRK33", "ESDIRK65"];

pub fn builtin_tableau(name: &str) -> Result<ButcherTableau> {
    match name.to_ascii_uppercase().as_str() {
        "RADAU23" => Ok(radau23()),
        "RADAU35" => Ok(radau35()),
        "RADAU47" => {
            let mut t = generate_radau_iia(4)?;
            t.leading_error_coefficient = Some(7.09e-7);
            Ok(t)
        }
        "RADAU59" => {
            let mut t = generate_radau_iia(5)?;
            t.leading_error_coefficient = Some(2.19e-9);
            Ok(t)
        }
        "DIRK33" => Ok(dirk33()),
        "ESDIRK65" => Ok(esdirk65()),
        _ => Err(Error::UnknownScheme(name.to_string())),
    }
}

fn radau23() -> ButcherTableau {
    ButcherTableau {
        name: "RADAU23".into(),
        a: vec![vec![5.0 / 12.0, -1.0 / 12.0], vec![3.0 / 4.0, 1.0 / 4.0]],
        b: vec![3.0 / 4.0, 1.0 / 4.0],
        c: vec![1.0 / 3.0, 1.0],
        order: 3,
        stage_order: 2,
        kind: SchemeKind::FullyImplicit,
        leading_error_coefficient: Some(1.39e-2),
    }
}

fn radau35() -> ButcherTableau {
    let r6 = 6.0f64.sqrt();
    let b = vec![4.0 / 9.0 - r6 / 36.0, 4.0 / 9.0 + r6 / 36.0, 1.0 / 9.0];
    ButcherTableau {
        name: "RADAU35".into(),
        a: vec![
            vec![
                11.0 / 45.0 - 7.0 * r6 / 360.0,
                37.0 / 225.0 - 169.0 * r6 / 1800.0,
                -2.0 / 225.0 + r6 / 75.0,
            ],
            vec![
                37.0 / 225.0 + 169.0 * r6 / 1800.0,
                11.0 / 45.0 + 7.0 * r6 / 360.0,
                -2.0 / 225.0 - r6 / 75.0,
            ],
            b.clone(),
        ],
        b,
        c: vec![2.0 / 5.0 - r6 / 10.0, 2.0 / 5.0 + r6 / 10.0, 1.0],
        order: 5,
        stage_order: 3,
        kind: SchemeKind::FullyImplicit,
        leading_error_coefficient: Some(1.39e-4),
    }
}

fn dirk33() -> ButcherTableau {
    let theta = (2.0f64.sqrt() / 4.0).atan() / 3.0;
    let alpha = 1.0 + 6.0f64.sqrt() / 2.0 * theta.sin() - 2.0f64.sqrt() / 2.0 * theta.cos();
    let tau2 = (1.0 + alpha) / 2.0;
    let b1 = -(6.0 * alpha * alpha - 16.0 * alpha + 1.0) / 4.0;
    let b2 = (6.0 * alpha * alpha - 20.0 * alpha + 5.0) / 4.0;
    ButcherTableau {
        name: "DIRK33".into(),
        a: vec![
            vec![alpha, 0.0, 0.0],
            vec![tau2 - alpha, alpha, 0.0],
            vec![b1, b2, alpha],
        ],
        b: vec![b1, b2, alpha],
        c: vec![alpha, tau2, 1.0],
        order: 3,
        stage_order: 1,
        kind: SchemeKind::Dirk,
        leading_error_coefficient: Some(2.59e-2),
    }
}

fn esdirk65() -> ButcherTableau {
    let g = 0.2780538411364465;
    let last = vec![
        -0.2786732780227907,
        1.8929947094010862,
        -0.1280948204262490,
        -1.3574693381380240,
        0.5931888860495311,
        g,
    ];
    ButcherTableau {
        name: "ESDIRK65".into(),
        a: vec![
            vec![0.0; 6],
            vec![g, g, 0.0, 0.0, 0.0, 0.0],
            vec![0.3137405401502951, 0.4363327154020044, g, 0.0, 0.0, 0.0],
            vec![0.2741986534107860, -0.0164268277321164, 0.0048197082596452, g, 0.0, 0.0],
            vec![
                -0.2441776975175844,
                -3.3203529439447852,
                0.0477747285706825,
                3.2974431145814931,
                g,
                0.0,
            ],
            last.clone(),
        ],
        b: last,
        c: vec![
            0.0,
            0.556107682272893,
            1.028127096688746,
            0.540645375074761,
            0.058741042826253,
            1.0,
        ],
        order: 5,
        stage_order: 2,
        kind: SchemeKind::Esdirk,
        leading_error_coefficient: Some(5.30e-4),
    }
}

/// Q_s(x) = P_s(2x - 1) - P_{s-1}(2x - 1) and its derivative.
fn radau_polynomial(s: usize, x: f64) -> (f64, f64) {
    let y = 2.0 * x - 1.0;
    let (p, dp) = legendre(s, y);
    let (q, dq) = legendre(s - 1, y);
    (p - q, 2.0 * (dp - dq))
}

const ROOT_TOL: f64 = 1e-14;
const MAX_ROOT_ITERS: usize = 200;

/// Zeros of Q_s in (0, 1], ascending.
fn radau_abscissae(s: usize) -> Result<Vec<f64>> {
    // Chebyshev grid on [0, 1] for bracketing; x = 1 is always a root.
    let n = 64 * s;
    let grid: Vec<f64> = (0..=n)
        .map(|k| 0.5 * (1.0 - (std::f64::consts::PI * k as f64 / n as f64).cos()))
        .collect();
    let mut roots = Vec::with_capacity(s);
    let mut worst = 0.0f64;
    for w in grid.windows(2) {
        let (mut lo, mut hi) = (w[0], w[1]);
        if hi >= 1.0 {
            break;
        }
        let (q_lo, _) = radau_polynomial(s, lo);
        let (q_hi, _) = radau_polynomial(s, hi);
        if q_lo == 0.0 {
            roots.push(lo);
            continue;
        }
        if q_lo.signum() == q_hi.signum() {
            continue;
        }
        let mut x = 0.5 * (lo + hi);
        let mut converged = false;
        let mut residual = f64::INFINITY;
        for _ in 0..MAX_ROOT_ITERS {
            let (q, dq) = radau_polynomial(s, x);
            residual = q.abs();
            if residual <= ROOT_TOL {
                converged = true;
                break;
            }
            if q.signum() == q_lo.signum() {
                lo = x;
            } else {
                hi = x;
            }
            if hi - lo <= 4.0 * f64::EPSILON * x.abs().max(1.0) {
                converged = true;
                break;
            }
            let newton = x - q / dq;
            x = if dq != 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
        }
        if !converged {
            return Err(Error::RootFinding {
                stages: s,
                residual,
                iterations: MAX_ROOT_ITERS,
            });
        }
        worst = worst.max(residual.min(radau_polynomial(s, x).0.abs()));
        roots.push(x);
    }
    roots.push(1.0);
    if roots.len() != s {
        return Err(Error::RootFinding {
            stages: s,
            residual: worst,
            iterations: MAX_ROOT_ITERS,
        });
    }
    Ok(roots)
}

/// Builds the s-stage Radau IIA tableau from the zeros of Q_s and exact
/// Gauss-Legendre integration of the Lagrange basis on those zeros.
pub fn generate_radau_iia(s: usize) -> Result<ButcherTableau> {
    if !(1..=9).contains(&s) {
        return Err(Error::StageCountOutOfRange(s));
    }
    let c = radau_abscissae(s)?;
    let lagrange = |k: usize, x: f64| -> f64 {
        c.iter()
            .enumerate()
            .filter(|(j, _)| *j != k)
            .map(|(_, cj)| (x - cj) / (c[k] - cj))
            .product()
    };
    let (xi, wq) = gauss_legendre(s + 2);
    let a: Vec<Vec<f64>> = c
        .iter()
        .map(|&ci| {
            (0..s)
                .map(|k| {
                    xi.iter()
                        .zip(&wq)
                        .map(|(x, w)| 0.5 * ci * w * lagrange(k, 0.5 * ci * (x + 1.0)))
                        .sum()
                })
                .collect()
        })
        .collect();
    let b = a[s - 1].clone();
    let p = 2 * s - 1;
    Ok(ButcherTableau {
        name: if p < 10 {
            format!("RADAU{s}{p}")
        } else {
            format!("RADAU{s}_{p}")
        },
        a,
        b,
        c,
        order: p,
        stage_order: s,
        kind: SchemeKind::FullyImplicit,
        leading_error_coefficient: None,
    })
}

fn invert(a: &[Vec<f64>], name: &str) -> Result<Vec<Vec<f64>>> {
    let s = a.len();
    let flat: Vec<f64> = a.iter().flatten().copied().collect();
    let scale = flat.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut cols = Vec::with_capacity(s);
    for j in 0..s {
        let mut e = vec![0.0; s];
        e[j] = 1.0;
        let col = solve_dense(&flat, &e, s).ok_or_else(|| Error::SingularButcherMatrix(name.into()))?;
        if col.iter().any(|v| !v.is_finite() || v.abs() * scale > 1e14) {
            return Err(Error::SingularButcherMatrix(name.into()));
        }
        cols.push(col);
    }
    Ok((0..s).map(|i| (0..s).map(|j| cols[j][i]).collect()).collect())
}

fn derive_from(a: &[Vec<f64>], b: &[f64], name: &str) -> Result<TableauDerived> {
    let s = b.len();
    let a_inv = invert(a, name)?;
    let bt_a_inv = (0..s).map(|j| (0..s).map(|i| b[i] * a_inv[i][j]).sum()).collect();
    let shifts = (0..s)
        .map(|i| (0..s).filter(|&j| j != i).map(|j| a_inv[j][i].abs()).sum())
        .collect();
    Ok(TableauDerived {
        a_inv,
        bt_a_inv,
        shifts,
    })
}

/// A^{-1}, b^T A^{-1} and the stage shifts of an invertible tableau.
///
/// ESDIRK tableaux are rejected here; use [`derive_implicit_block`].
pub fn derive(tab: &ButcherTableau) -> Result<TableauDerived> {
    if tab.kind == SchemeKind::Esdirk {
        return Err(Error::ExplicitFirstStage(tab.name.clone()));
    }
    derive_from(&tab.a, &tab.b, &tab.name)
}

/// Derived quantities of the trailing implicit block of an ESDIRK tableau
/// (stages 2..s); for other kinds this is the same as [`derive`].
pub fn derive_implicit_block(tab: &ButcherTableau) -> Result<TableauDerived> {
    if tab.kind != SchemeKind::Esdirk {
        return derive(tab);
    }
    let sub: Vec<Vec<f64>> = tab.a[1..].iter().map(|row| row[1..].to_vec()).collect();
    derive_from(&sub, &tab.b[1..], &tab.name)
}

/// R(z) = 1 + z b^T (I - zA)^{-1} 1.
pub fn stability_function(tab: &ButcherTableau, z: Complex64) -> Result<Complex64> {
    let s = tab.stages();
    let mut m: Vec<Complex64> = (0..s * s)
        .map(|k| {
            let (i, j) = (k / s, k % s);
            let id = if i == j { 1.0 } else { 0.0 };
            Complex64::new(id, 0.0) - z * tab.a[i][j]
        })
        .collect();
    let mut x = vec![Complex64::new(1.0, 0.0); s];
    let scale = 1.0 + z.norm() * tab.a.iter().flatten().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let singular = || Error::SingularStabilityMatrix { re: z.re, im: z.im };
    for k in 0..s {
        let p = (k..s)
            .max_by(|&i, &j| m[i * s + k].norm().total_cmp(&m[j * s + k].norm()))
            .unwrap();
        if m[p * s + k].norm() <= 1e-15 * scale {
            return Err(singular());
        }
        if p != k {
            for j in 0..s {
                m.swap(k * s + j, p * s + j);
            }
            x.swap(k, p);
        }
        for i in k + 1..s {
            let l = m[i * s + k] / m[k * s + k];
            for j in k..s {
                let mkj = m[k * s + j];
                m[i * s + j] -= l * mkj;
            }
            let xk = x[k];
            x[i] -= l * xk;
        }
    }
    for i in (0..s).rev() {
        let mut acc = x[i];
        for j in i + 1..s {
            acc -= m[i * s + j] * x[j];
        }
        x[i] = acc / m[i * s + i];
    }
    let bx: Complex64 = tab.b.iter().zip(&x).map(|(b, xi)| xi * *b).sum();
    Ok(Complex64::new(1.0, 0.0) + z * bx)
}

/// |C| in e^z - R(z) = C z^{p+1} + O(z^{p+2}), estimated from the one-step
/// error on u' = u at two step sizes with a Richardson correction.
pub fn estimate_leading_error_coefficient(tab: &ButcherTableau, h: f64) -> Result<f64> {
    let p = tab.order as i32;
    let scaled = |h: f64| -> Result<f64> {
        let r = stability_function(tab, Complex64::new(h, 0.0))?;
        Ok((h.exp() - r.re) / h.powi(p + 1))
    };
    let coarse = scaled(h)?;
    let fine = scaled(0.5 * h)?;
    Ok((2.0 * fine - coarse).abs())
}

/// A rooted tree stored as the (sorted) indices of its children in a
/// generation-ordered forest.
#[derive(Clone, Debug)]
struct RootedTree {
    children: Vec<usize>,
    order: usize,
    density: f64,
    label: String,
}

fn rooted_trees(max_order: usize) -> Vec<RootedTree> {
    let mut forest = vec![RootedTree {
        children: vec![],
        order: 1,
        density: 1.0,
        label: "t".into(),
    }];
    for n in 2..=max_order {
        // multisets of existing trees (non-decreasing indices) with total order n - 1
        let mut stack: Vec<(Vec<usize>, usize)> = vec![(vec![], 0)];
        let existing = forest.len();
        while let Some((kids, weight)) = stack.pop() {
            if weight == n - 1 {
                let density = n as f64 * kids.iter().map(|&k| forest[k].density).product::<f64>();
                let inner: Vec<&str> = kids.iter().map(|&k| forest[k].label.as_str()).collect();
                forest.push(RootedTree {
                    label: format!("[{}]", inner.join(",")),
                    children: kids,
                    order: n,
                    density,
                });
                continue;
            }
            let start = kids.last().copied().unwrap_or(0);
            for k in start..existing {
                if weight + forest[k].order <= n - 1 {
                    let mut next = kids.clone();
                    next.push(k);
                    stack.push((next, weight + forest[k].order));
                }
            }
        }
    }
    forest
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionResidual {
    pub label: String,
    pub order: usize,
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderReport {
    pub scheme: String,
    pub up_to: usize,
    /// b^T Phi(t) - 1/gamma(t) for every rooted tree t with |t| <= up_to.
    pub conditions: Vec<ConditionResidual>,
    /// max_i |sum_j a_ij c_j^{k-1} - c_i^k / k| for k = 1..=up_to.
    pub stage_residuals: Vec<f64>,
    pub observed_order: usize,
    pub observed_stage_order: usize,
    pub passed: bool,
}

pub const ORDER_CONDITION_TOL: f64 = 1e-10;

/// Residuals of the classical order conditions and of the stage-order
/// conditions. Passes iff every tree condition up to `up_to` and every
/// stage condition up to the tabulated stage order holds to 1e-10.
pub fn check_order_conditions(tab: &ButcherTableau, up_to: usize) -> OrderReport {
    let s = tab.stages();
    let forest = rooted_trees(up_to.max(1));
    let a = tab.a_flat();
    // weights[k][i] = Phi_i(t_k): product over children of (A Phi(child))_i
    let mut weights: Vec<Vec<f64>> = Vec::with_capacity(forest.len());
    let mut conditions = Vec::new();
    for tree in &forest {
        let mut phi = vec![1.0; s];
        for &child in &tree.children {
            for (i, p) in phi.iter_mut().enumerate() {
                let ai: f64 = (0..s).map(|j| a[i * s + j] * weights[child][j]).sum();
                *p *= ai;
            }
        }
        if tree.order <= up_to {
            let bt: f64 = tab.b.iter().zip(&phi).map(|(b, p)| b * p).sum();
            conditions.push(ConditionResidual {
                label: tree.label.clone(),
                order: tree.order,
                residual: bt - 1.0 / tree.density,
            });
        }
        weights.push(phi);
    }
    let stage_residuals: Vec<f64> = (1..=up_to)
        .map(|k| {
            (0..s)
                .map(|i| {
                    let lhs: f64 = (0..s).map(|j| tab.a[i][j] * tab.c[j].powi(k as i32 - 1)).sum();
                    (lhs - tab.c[i].powi(k as i32) / k as f64).abs()
                })
                .fold(0.0, f64::max)
        })
        .collect();
    let ok = |r: f64| r.abs() <= ORDER_CONDITION_TOL;
    let observed_order = (1..=up_to)
        .take_while(|&p| conditions.iter().filter(|c| c.order == p).all(|c| ok(c.residual)))
        .last()
        .unwrap_or(0);
    let observed_stage_order = stage_residuals.iter().take_while(|r| ok(**r)).count();
    let passed = conditions.iter().all(|c| ok(c.residual))
        && stage_residuals.iter().take(tab.stage_order).all(|r| ok(*r));
    OrderReport {
        scheme: tab.name.clone(),
        up_to,
        conditions,
        stage_residuals,
        observed_order,
        observed_stage_order,
        passed,
    }
}
