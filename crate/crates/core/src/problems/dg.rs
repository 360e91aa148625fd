//! Nodal discontinuous Galerkin on a periodic 1D mesh.
//!
//! `u_t + f(u)_x = ν u_xx (+ s)` with a Lax-Friedrichs flux for `f` (upwind
//! for linear advection) and symmetric interior penalty for the diffusion.
//! The basis is Lagrange on Gauss-Lobatto points, so face values are nodal
//! values; integrals use Gauss-Legendre quadrature.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dense::is_spd;
use crate::error::{Error, Result};
use crate::mesh_blocks::{BlockDiagonalMatrix, BlockSparseMatrix, ElementGraph};
use crate::quadrature::{gauss_legendre, gauss_lobatto};

use super::SemidiscreteProblem;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum InitialData {
    /// `sin(2πx/L)`
    Sine,
    Constant(f64),
    /// Uniform in [-1, 1] at every node.
    Random(u64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dg1dConfig {
    pub poly_degree: usize,
    pub elements: usize,
    pub length: f64,
    pub speed: f64,
    pub diffusion: f64,
    /// Interior penalty σ; defaults to `(p+1)²/h`, smaller values are rejected.
    pub penalty: Option<f64>,
    pub initial: InitialData,
}

impl Default for Dg1dConfig {
    fn default() -> Self {
        Dg1dConfig {
            poly_degree: 2,
            elements: 16,
            length: 1.0,
            speed: 1.0,
            diffusion: 0.0,
            penalty: None,
            initial: InitialData::Sine,
        }
    }
}

/// `u*(x, t) = mean + amplitude sin(2πx/L − t)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MmsSolution {
    pub mean: f64,
    pub amplitude: f64,
}

impl Default for MmsSolution {
    fn default() -> Self {
        MmsSolution {
            mean: 0.5,
            amplitude: 0.3,
        }
    }
}

#[derive(Clone, Debug)]
enum Flux {
    Linear(f64),
    Burgers,
}

impl Flux {
    fn value(&self, u: f64) -> f64 {
        match self {
            Flux::Linear(a) => a * u,
            Flux::Burgers => 0.5 * u * u,
        }
    }

    fn derivative(&self, u: f64) -> f64 {
        match self {
            Flux::Linear(a) => *a,
            Flux::Burgers => u,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Dg1d {
    cfg: Dg1dConfig,
    flux: Flux,
    /// Lax-Friedrichs dissipation constant.
    lf: f64,
    mms: Option<MmsSolution>,
    graph: Arc<ElementGraph>,
    mass: Arc<BlockDiagonalMatrix>,
    m: usize,
    h: f64,
    sigma: f64,
    x_nodes: Vec<f64>,
    quad_x: Vec<f64>,
    quad_w: Vec<f64>,
    /// basis values and reference derivatives at quadrature points, `[q * m + k]`
    phi: Vec<f64>,
    dphi: Vec<f64>,
    dphi_left: Vec<f64>,
    dphi_right: Vec<f64>,
}

/// Values and derivatives of the Lagrange basis on `nodes` at `x`.
fn lagrange(nodes: &[f64], x: f64) -> (Vec<f64>, Vec<f64>) {
    let m = nodes.len();
    let mut val = vec![0.0; m];
    let mut der = vec![0.0; m];
    for k in 0..m {
        let mut v = 1.0;
        for j in (0..m).filter(|&j| j != k) {
            v *= (x - nodes[j]) / (nodes[k] - nodes[j]);
        }
        val[k] = v;
        let mut d = 0.0;
        for l in (0..m).filter(|&l| l != k) {
            let mut prod = 1.0 / (nodes[k] - nodes[l]);
            for j in (0..m).filter(|&j| j != k && j != l) {
                prod *= (x - nodes[j]) / (nodes[k] - nodes[j]);
            }
            d += prod;
        }
        der[k] = d;
    }
    (val, der)
}

fn build(cfg: Dg1dConfig, flux: Flux, lf: f64, mms: Option<MmsSolution>) -> Result<Dg1d> {
    let p = cfg.poly_degree;
    let t = cfg.elements;
    if p < 1 {
        return Err(Error::InvalidConfig("DG needs polynomial degree >= 1".into()));
    }
    if !(cfg.length > 0.0) || !(cfg.diffusion >= 0.0) {
        return Err(Error::InvalidConfig("DG needs length > 0 and diffusion >= 0".into()));
    }
    let graph = Arc::new(ElementGraph::build_line_mesh(t, true)?);
    let m = p + 1;
    let h = cfg.length / t as f64;
    let min_sigma = ((p + 1) * (p + 1)) as f64 / h;
    let sigma = cfg.penalty.unwrap_or(min_sigma);
    if !(sigma >= min_sigma * (1.0 - 1e-12)) {
        return Err(Error::InvalidConfig(format!(
            "interior penalty {sigma} below the minimum (p+1)^2/h = {min_sigma}"
        )));
    }
    let (ref_nodes, _) = gauss_lobatto(m);
    let (quad_x, quad_w) = gauss_legendre(2 * p + 2);
    let mut phi = Vec::with_capacity(quad_x.len() * m);
    let mut dphi = Vec::with_capacity(quad_x.len() * m);
    for &xq in &quad_x {
        let (v, d) = lagrange(&ref_nodes, xq);
        phi.extend(v);
        dphi.extend(d);
    }
    let (_, dphi_left) = lagrange(&ref_nodes, -1.0);
    let (_, dphi_right) = lagrange(&ref_nodes, 1.0);
    let mut mblock = vec![0.0; m * m];
    for (q, w) in quad_w.iter().enumerate() {
        for i in 0..m {
            for j in 0..m {
                mblock[i * m + j] += 0.5 * h * w * phi[q * m + i] * phi[q * m + j];
            }
        }
    }
    if !is_spd(&mblock, m) {
        return Err(Error::MassNotSpd(0));
    }
    let mass = Arc::new(BlockDiagonalMatrix::new(m, vec![mblock; t]));
    let x_nodes = (0..t)
        .flat_map(|e| ref_nodes.iter().map(move |xi| (e as f64 + 0.5 * (xi + 1.0)) * h))
        .collect();
    Ok(Dg1d {
        cfg,
        flux,
        lf,
        mms,
        graph,
        mass,
        m,
        h,
        sigma,
        x_nodes,
        quad_x,
        quad_w,
        phi,
        dphi,
        dphi_left,
        dphi_right,
    })
}

/// Linear advection-diffusion `u_t + a u_x = ν u_xx`.
pub fn make_advection_diffusion_dg(cfg: Dg1dConfig) -> Result<Dg1d> {
    let a = cfg.speed;
    build(cfg, Flux::Linear(a), a.abs(), None)
}

/// Viscous Burgers `u_t + (u²/2)_x = ν u_xx + s` with the source `s` chosen so
/// that `u*` solves the PDE. `speed` and `initial` in `cfg` are ignored.
pub fn make_viscous_burgers_mms(cfg: Dg1dConfig, solution: MmsSolution) -> Result<Dg1d> {
    let lf = solution.mean.abs() + solution.amplitude.abs();
    build(cfg, Flux::Burgers, lf, Some(solution))
}

impl Dg1d {
    pub fn config(&self) -> &Dg1dConfig {
        &self.cfg
    }

    pub fn penalty(&self) -> f64 {
        self.sigma
    }

    pub fn node_coordinates(&self) -> &[f64] {
        &self.x_nodes
    }

    fn wavenumber(&self) -> f64 {
        2.0 * PI / self.cfg.length
    }

    fn mms_value(&self, sol: &MmsSolution, x: f64, t: f64) -> f64 {
        sol.mean + sol.amplitude * (self.wavenumber() * x - t).sin()
    }

    fn mms_source(&self, sol: &MmsSolution, x: f64, t: f64) -> f64 {
        let k = self.wavenumber();
        let th = k * x - t;
        let u = sol.mean + sol.amplitude * th.sin();
        let u_t = -sol.amplitude * th.cos();
        let u_x = sol.amplitude * k * th.cos();
        let u_xx = -sol.amplitude * k * k * th.sin();
        u_t + u * u_x - self.cfg.diffusion * u_xx
    }

    /// Quadrature-weighted L² norm of the DG function with nodal values `v`.
    pub fn l2_norm(&self, v: &[f64]) -> f64 {
        let m = self.m;
        let mut acc = 0.0;
        for e in 0..self.cfg.elements {
            for (q, w) in self.quad_w.iter().enumerate() {
                let val: f64 = (0..m).map(|k| self.phi[q * m + k] * v[e * m + k]).sum();
                acc += 0.5 * self.h * w * val * val;
            }
        }
        acc.sqrt()
    }

    /// L² error against `g(x)` evaluated at the quadrature points.
    pub fn l2_error_against(&self, v: &[f64], g: impl Fn(f64) -> f64) -> f64 {
        let m = self.m;
        let mut acc = 0.0;
        for e in 0..self.cfg.elements {
            for (q, (w, xq)) in self.quad_w.iter().zip(&self.quad_x).enumerate() {
                let x = (e as f64 + 0.5 * (xq + 1.0)) * self.h;
                let val: f64 = (0..m).map(|k| self.phi[q * m + k] * v[e * m + k]).sum();
                acc += 0.5 * self.h * w * (val - g(x)).powi(2);
            }
        }
        acc.sqrt()
    }

    /// The continuous exact solution `u(x, t)` when known.
    pub fn exact_value(&self, x: f64, t: f64) -> Option<f64> {
        if let Some(sol) = &self.mms {
            return Some(self.mms_value(sol, x, t));
        }
        let k = self.wavenumber();
        match self.cfg.initial {
            InitialData::Sine => {
                Some((-self.cfg.diffusion * k * k * t).exp() * (k * (x - self.cfg.speed * t)).sin())
            }
            InitialData::Constant(c) => Some(c),
            InitialData::Random(_) => None,
        }
    }

    fn face_terms(&self, u: &[f64], left: usize, right: usize) -> FaceTerms {
        let m = self.m;
        let p = m - 1;
        let nu = self.cfg.diffusion;
        let (ul, ur) = (u[left * m + p], u[right * m]);
        let scale = 2.0 / self.h;
        let uxl: f64 = scale * (0..m).map(|k| self.dphi_right[k] * u[left * m + k]).sum::<f64>();
        let uxr: f64 = scale * (0..m).map(|k| self.dphi_left[k] * u[right * m + k]).sum::<f64>();
        let jump = ul - ur;
        let flux = 0.5 * (self.flux.value(ul) + self.flux.value(ur)) + 0.5 * self.lf * jump - 0.5 * nu * (uxl + uxr)
            + nu * self.sigma * jump;
        FaceTerms {
            flux,
            jump,
            dflux_l: (0.5 * (self.flux.derivative(ul) + self.lf) + nu * self.sigma),
            dflux_r: (0.5 * (self.flux.derivative(ur) - self.lf) - nu * self.sigma),
        }
    }
}

struct FaceTerms {
    flux: f64,
    jump: f64,
    /// derivatives of the flux with respect to the two trace values
    dflux_l: f64,
    dflux_r: f64,
}

impl SemidiscreteProblem for Dg1d {
    fn name(&self) -> String {
        let kind = if self.mms.is_some() { "burgers-mms" } else { "advection-diffusion" };
        format!("{kind}(p={},T={})", self.cfg.poly_degree, self.cfg.elements)
    }

    fn graph(&self) -> &Arc<ElementGraph> {
        &self.graph
    }

    fn block_size(&self) -> usize {
        self.m
    }

    fn mass(&self) -> &Arc<BlockDiagonalMatrix> {
        &self.mass
    }

    fn rhs(&self, t: f64, u: &[f64]) -> Vec<f64> {
        let m = self.m;
        let p = m - 1;
        let nt = self.cfg.elements;
        let nu = self.cfg.diffusion;
        let scale = 2.0 / self.h;
        let mut r = vec![0.0; nt * m];
        for e in 0..nt {
            let ue = &u[e * m..(e + 1) * m];
            let re = &mut r[e * m..(e + 1) * m];
            for (q, (w, xq)) in self.quad_w.iter().zip(&self.quad_x).enumerate() {
                let uq: f64 = (0..m).map(|k| self.phi[q * m + k] * ue[k]).sum();
                let uxq: f64 = scale * (0..m).map(|k| self.dphi[q * m + k] * ue[k]).sum::<f64>();
                let g = self.flux.value(uq) - nu * uxq;
                let src = self
                    .mms
                    .as_ref()
                    .map(|sol| self.mms_source(sol, (e as f64 + 0.5 * (xq + 1.0)) * self.h, t));
                for i in 0..m {
                    re[i] += w * g * self.dphi[q * m + i];
                    if let Some(s) = src {
                        re[i] += 0.5 * self.h * w * s * self.phi[q * m + i];
                    }
                }
            }
        }
        for left in 0..nt {
            let right = (left + 1) % nt;
            let f = self.face_terms(u, left, right);
            r[left * m + p] -= f.flux;
            r[right * m] += f.flux;
            for i in 0..m {
                r[left * m + i] += nu / self.h * self.dphi_right[i] * f.jump;
                r[right * m + i] += nu / self.h * self.dphi_left[i] * f.jump;
            }
        }
        r
    }

    fn jacobian(&self, _t: f64, u: &[f64]) -> BlockSparseMatrix {
        let m = self.m;
        let p = m - 1;
        let nt = self.cfg.elements;
        let nu = self.cfg.diffusion;
        let scale = 2.0 / self.h;
        let mut jac = BlockSparseMatrix::zeros(self.graph.clone(), m);
        for e in 0..nt {
            let ue = &u[e * m..(e + 1) * m];
            let block = jac.block_mut(e, e).expect("diagonal block");
            for (q, w) in self.quad_w.iter().enumerate() {
                let uq: f64 = (0..m).map(|k| self.phi[q * m + k] * ue[k]).sum();
                let a = self.flux.derivative(uq);
                for i in 0..m {
                    for j in 0..m {
                        block[i * m + j] += w
                            * (a * self.phi[q * m + j] - nu * scale * self.dphi[q * m + j])
                            * self.dphi[q * m + i];
                    }
                }
            }
        }
        for left in 0..nt {
            let right = (left + 1) % nt;
            let f = self.face_terms(u, left, right);
            // d(flux)/du on each side, as full block-row vectors
            let mut dfl = vec![0.0; m];
            let mut dfr = vec![0.0; m];
            for k in 0..m {
                dfl[k] = -0.5 * nu * scale * self.dphi_right[k];
                dfr[k] = -0.5 * nu * scale * self.dphi_left[k];
            }
            dfl[p] += f.dflux_l;
            dfr[0] += f.dflux_r;
            let mut djl = vec![0.0; m];
            let mut djr = vec![0.0; m];
            djl[p] = 1.0;
            djr[0] = -1.0;
            for (row, sign, node, dphi) in [
                (left, -1.0, p, &self.dphi_right),
                (right, 1.0, 0, &self.dphi_left),
            ] {
                for (col, df, dj) in [(left, &dfl, &djl), (right, &dfr, &djr)] {
                    let block = jac.block_mut(row, col).expect("neighbor block");
                    for k in 0..m {
                        block[node * m + k] += sign * df[k];
                        for i in 0..m {
                            block[i * m + k] += nu / self.h * dphi[i] * dj[k];
                        }
                    }
                }
            }
        }
        jac
    }

    fn initial_state(&self) -> Vec<f64> {
        if let Some(sol) = &self.mms {
            return self.x_nodes.iter().map(|&x| self.mms_value(sol, x, 0.0)).collect();
        }
        match &self.cfg.initial {
            InitialData::Random(seed) => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                self.x_nodes.iter().map(|_| rng.gen_range(-1.0..1.0)).collect()
            }
            _ => self
                .x_nodes
                .iter()
                .map(|&x| self.exact_value(x, 0.0).expect("closed form"))
                .collect(),
        }
    }

    /// Nodal interpolant of the exact PDE solution.
    fn exact(&self, t: f64) -> Option<Vec<f64>> {
        self.x_nodes.iter().map(|&x| self.exact_value(x, t)).collect()
    }
}
