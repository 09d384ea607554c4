//! Linear-quadratic control of latent force models.
//!
//! The controller penalizes physical states only, so the lifted state weight
//! is `blockdiag(X, 0)`. Because the latent block is uncontrollable, the
//! Riccati solution splits: the physical block `P₁₁` solves the plant-only
//! Riccati equation, and the cross block `P₁₂` solves a linear equation
//! driven by the force coupling. Both the full and the partitioned forms
//! are provided so they can be checked against each other.

mod simulate;

pub use simulate::{closed_loop_simulate, simulate_open_loop, ClosedLoopRecord, OpenLoopData, Schedule, Scenario};

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{argument, dimension, LfmError, Result};
use crate::model::{AugmentedLfm, ModeBlock};
use crate::numlin::care::{riccati_rhs, riccati_step};
use crate::numlin::{check_finite, solve_care, solve_lyapunov, solve_sylvester, symmetrize, SymmetricPsdMatrix};
use crate::systheory::pbh_stabilizability;

/// Horizon of the quadratic cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Horizon {
    Finite(f64),
    Infinite,
}

/// Quadratic cost `½ fᵀ(T) Φ f(T) + ½ ∫ (fᵀ X f + cᵀ U c) dt`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostSpec {
    /// Physical state penalty (n_f × n_f).
    pub x: DMatrix<f64>,
    /// Control penalty (m × m), positive definite.
    pub u: DMatrix<f64>,
    /// Terminal physical state penalty (n_f × n_f).
    pub phi: DMatrix<f64>,
    pub horizon: Horizon,
}

impl CostSpec {
    pub fn stationary(x: DMatrix<f64>, u: DMatrix<f64>) -> Self {
        let n = x.nrows();
        Self { x, u, phi: DMatrix::zeros(n, n), horizon: Horizon::Infinite }
    }

    pub fn finite(x: DMatrix<f64>, u: DMatrix<f64>, phi: DMatrix<f64>, horizon: f64) -> Self {
        Self { x, u, phi, horizon: Horizon::Finite(horizon) }
    }

    /// Checks shapes against a model and the definiteness of the weights.
    pub fn validate(&self, n_f: usize, n_controls: usize) -> Result<()> {
        if self.x.shape() != (n_f, n_f) || self.phi.shape() != (n_f, n_f) {
            return Err(dimension(format!(
                "state weights are {:?} and {:?}, expected {n_f}x{n_f}",
                self.x.shape(),
                self.phi.shape()
            )));
        }
        if self.u.shape() != (n_controls, n_controls) {
            return Err(dimension(format!(
                "control weight is {:?}, expected {n_controls}x{n_controls}",
                self.u.shape()
            )));
        }
        for (m, name) in [(&self.x, "X"), (&self.u, "U"), (&self.phi, "Φ")] {
            check_finite(m, name)?;
        }
        SymmetricPsdMatrix::new(self.x.clone())?;
        SymmetricPsdMatrix::new(self.phi.clone())?;
        if n_controls > 0 && ((&self.u - self.u.transpose()).amax() > 1e-12 * (1.0 + self.u.amax())
            || self.u.clone().cholesky().is_none())
        {
            return Err(argument("control weight U must be symmetric positive definite"));
        }
        if let Horizon::Finite(t) = self.horizon {
            if !(t.is_finite() && t > 0.0) {
                return Err(argument(format!("horizon must be positive, got {t}")));
            }
        }
        Ok(())
    }

    fn u_inverse(&self) -> Result<DMatrix<f64>> {
        if self.u.nrows() == 0 {
            return Ok(DMatrix::zeros(0, 0));
        }
        self.u
            .clone()
            .cholesky()
            .map(|c| c.inverse())
            .ok_or_else(|| argument("control weight U must be symmetric positive definite"))
    }
}

/// Riccati solution and gain at one time of a finite-horizon problem.
#[derive(Debug, Clone, Serialize)]
pub struct GainSample {
    pub t: f64,
    pub p: SymmetricPsdMatrix,
    pub gain: DMatrix<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub enum LqrMode {
    Stationary,
    FiniteHorizon { trajectory: Vec<GainSample> },
}

/// Feedback law `c = −gain · ĝ`.
#[derive(Debug, Clone, Serialize)]
pub struct LqrSolution {
    /// Riccati solution (at the first grid point for finite horizons).
    pub p: SymmetricPsdMatrix,
    pub gain: DMatrix<f64>,
    /// Number of physical states; splits `P` and the gain into blocks.
    pub n_f: usize,
    pub mode: LqrMode,
}

impl LqrSolution {
    pub fn p11(&self) -> DMatrix<f64> {
        self.p.view((0, 0), (self.n_f, self.n_f)).into_owned()
    }

    pub fn p12(&self) -> DMatrix<f64> {
        let n = self.p.dim();
        self.p.view((0, self.n_f), (self.n_f, n - self.n_f)).into_owned()
    }

    pub fn p22(&self) -> DMatrix<f64> {
        let n = self.p.dim();
        self.p.view((self.n_f, self.n_f), (n - self.n_f, n - self.n_f)).into_owned()
    }

    pub fn physical_gain(&self) -> DMatrix<f64> {
        self.gain.columns(0, self.n_f).into_owned()
    }

    pub fn latent_gain(&self) -> DMatrix<f64> {
        let n = self.gain.ncols();
        self.gain.columns(self.n_f, n - self.n_f).into_owned()
    }

    /// Gain trajectory in finite-horizon mode.
    pub fn trajectory(&self) -> Option<&[GainSample]> {
        match &self.mode {
            LqrMode::FiniteHorizon { trajectory } => Some(trajectory),
            LqrMode::Stationary => None,
        }
    }
}

fn lift(aug: &AugmentedLfm, w: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(aug.dim(), aug.dim());
    out.view_mut((0, 0), (aug.n_f, aug.n_f)).copy_from(w);
    out
}

fn check_stabilizable(aug: &AugmentedLfm) -> Result<()> {
    let verdict = pbh_stabilizability(&aug.af(), &aug.mf());
    match verdict.failures.first() {
        Some(w) => Err(LfmError::NotStabilizable { re: w.re, im: w.im }),
        None => Ok(()),
    }
}

fn check_grid(grid: &[f64], cost: &CostSpec) -> Result<()> {
    let Horizon::Finite(horizon) = cost.horizon else {
        return Err(argument("finite-horizon solve requires a finite horizon"));
    };
    if grid.len() < 2 {
        return Err(argument("time grid needs at least two points"));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) || grid.iter().any(|t| !t.is_finite()) {
        return Err(argument("time grid must be finite and strictly increasing"));
    }
    let last = grid[grid.len() - 1];
    if (last - horizon).abs() > 1e-12 * horizon.abs().max(1.0) {
        return Err(argument(format!("time grid ends at {last}, horizon is {horizon}")));
    }
    Ok(())
}

/// Ratio of `‖P‖_F` to the data scale above which the backward integration
/// is considered to have diverged.
const BLOW_UP: f64 = 1e12;

/// Backward RK4 integration of a matrix-valued terminal value problem,
/// recording the state at every grid point (returned in grid order).
fn integrate_backward<S, F, N>(grid: &[f64], h_max: f64, terminal: S, rhs: F, norm: N, scale: f64) -> Result<Vec<S>>
where
    S: Clone + Combine,
    F: Fn(&S) -> S,
    N: Fn(&S) -> f64,
{
    let mut out = vec![terminal.clone(); grid.len()];
    let mut state = terminal;
    for k in (0..grid.len() - 1).rev() {
        let span = grid[k + 1] - grid[k];
        let steps = (span / h_max).ceil().max(1.0) as usize;
        let h = span / steps as f64;
        for i in 0..steps {
            let k1 = rhs(&state);
            let k2 = rhs(&state.axpy(&k1, 0.5 * h));
            let k3 = rhs(&state.axpy(&k2, 0.5 * h));
            let k4 = rhs(&state.axpy(&k3, h));
            state = state.rk4(&k1, &k2, &k3, &k4, h);
            let size = norm(&state);
            if !size.is_finite() || size > BLOW_UP * scale {
                return Err(LfmError::Integration { t: grid[k + 1] - (i + 1) as f64 * h });
            }
        }
        out[k] = state.clone();
    }
    Ok(out)
}

/// Minimal vector-space operations for the RK4 driver. The right-hand sides
/// are `−dP/dt`, so stepping backward in time adds them.
trait Combine: Sized {
    fn axpy(&self, d: &Self, h: f64) -> Self;
    fn rk4(&self, k1: &Self, k2: &Self, k3: &Self, k4: &Self, h: f64) -> Self;
}

impl Combine for DMatrix<f64> {
    fn axpy(&self, d: &Self, h: f64) -> Self {
        self + d * h
    }

    fn rk4(&self, k1: &Self, k2: &Self, k3: &Self, k4: &Self, h: f64) -> Self {
        symmetrize(self + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
    }
}

#[derive(Clone)]
struct Blocks {
    p11: DMatrix<f64>,
    p12: DMatrix<f64>,
    p22: DMatrix<f64>,
}

impl Combine for Blocks {
    fn axpy(&self, d: &Self, h: f64) -> Self {
        Blocks { p11: &self.p11 + &d.p11 * h, p12: &self.p12 + &d.p12 * h, p22: &self.p22 + &d.p22 * h }
    }

    fn rk4(&self, k1: &Self, k2: &Self, k3: &Self, k4: &Self, h: f64) -> Self {
        let mix = |p: &DMatrix<f64>, a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>, d: &DMatrix<f64>| {
            p + (a + b * 2.0 + c * 2.0 + d) * (h / 6.0)
        };
        Blocks {
            p11: symmetrize(mix(&self.p11, &k1.p11, &k2.p11, &k3.p11, &k4.p11)),
            p12: mix(&self.p12, &k1.p12, &k2.p12, &k3.p12, &k4.p12),
            p22: symmetrize(mix(&self.p22, &k1.p22, &k2.p22, &k3.p22, &k4.p22)),
        }
    }
}

fn finite_solution(aug: &AugmentedLfm, uinv: &DMatrix<f64>, grid: &[f64], ps: Vec<DMatrix<f64>>) -> LqrSolution {
    let um = uinv * aug.m.transpose();
    let trajectory: Vec<GainSample> = grid
        .iter()
        .zip(ps)
        .map(|(&t, p)| GainSample { t, gain: &um * &p, p: SymmetricPsdMatrix::symmetrized(p) })
        .collect();
    LqrSolution {
        p: trajectory[0].p.clone(),
        gain: trajectory[0].gain.clone(),
        n_f: aug.n_f,
        mode: LqrMode::FiniteHorizon { trajectory },
    }
}

/// Integrates `−dP/dt = AᵀP + PA − P M U⁻¹ Mᵀ P + X_g`, `P(T) = Φ_g`, backward
/// over the full augmented state and reports `P` and the gain on `grid`.
pub fn solve_finite_horizon(aug: &AugmentedLfm, cost: &CostSpec, grid: &[f64]) -> Result<LqrSolution> {
    cost.validate(aug.n_f, aug.m.ncols())?;
    check_grid(grid, cost)?;
    let uinv = cost.u_inverse()?;
    let s = &aug.m * &uinv * aug.m.transpose();
    let xg = lift(aug, &cost.x);
    let scale = 1.0 + cost.x.norm() + cost.phi.norm();
    let ps = integrate_backward(
        grid,
        riccati_step(&aug.a),
        lift(aug, &cost.phi),
        |p| riccati_rhs(&aug.a, &s, &xg, p),
        |p| p.norm(),
        scale,
    )?;
    Ok(finite_solution(aug, &uinv, grid, ps))
}

/// Same problem integrated as three coupled block equations: the plant-only
/// Riccati equation for `P₁₁`, a linear equation for the cross block `P₁₂`
/// and one for the latent block `P₂₂`.
pub fn solve_finite_horizon_partitioned(aug: &AugmentedLfm, cost: &CostSpec, grid: &[f64]) -> Result<LqrSolution> {
    cost.validate(aug.n_f, aug.m.ncols())?;
    check_grid(grid, cost)?;
    let (nf, nu) = (aug.n_f, aug.n_u);
    let uinv = cost.u_inverse()?;
    let af = aug.af();
    let au = aug.au();
    let coupling = aug.coupling();
    let mf = aug.mf();
    let sf = &mf * &uinv * mf.transpose();
    let x = &cost.x;
    let rhs = |b: &Blocks| {
        let p21 = b.p12.transpose();
        let p11 = riccati_rhs(&af, &sf, x, &b.p11);
        let sf_p12 = &sf * &b.p12;
        let p12 = af.transpose() * &b.p12 + &b.p11 * &coupling + &b.p12 * &au - &b.p11 * &sf_p12;
        let cross = coupling.transpose() * &b.p12;
        let p22 = &cross + cross.transpose() + au.transpose() * &b.p22 + &b.p22 * &au - &p21 * &sf_p12;
        Blocks { p11, p12, p22 }
    };
    let terminal = Blocks { p11: cost.phi.clone(), p12: DMatrix::zeros(nf, nu), p22: DMatrix::zeros(nu, nu) };
    let scale = 1.0 + cost.x.norm() + cost.phi.norm();
    let norm = |b: &Blocks| (b.p11.norm_squared() + 2.0 * b.p12.norm_squared() + b.p22.norm_squared()).sqrt();
    let blocks = integrate_backward(grid, riccati_step(&aug.a), terminal, rhs, norm, scale)?;
    let ps = blocks
        .into_iter()
        .map(|b| {
            let mut p = DMatrix::zeros(nf + nu, nf + nu);
            p.view_mut((0, 0), (nf, nf)).copy_from(&b.p11);
            p.view_mut((0, nf), (nf, nu)).copy_from(&b.p12);
            p.view_mut((nf, 0), (nu, nf)).copy_from(&b.p12.transpose());
            p.view_mut((nf, nf), (nu, nu)).copy_from(&b.p22);
            p
        })
        .collect();
    Ok(finite_solution(aug, &uinv, grid, ps))
}

/// Groups of control channels, one per block, when the cost and the control
/// matrix respect the partition `blocks` of the state. `None` otherwise.
fn channel_partition(
    blocks: &[Vec<usize>],
    m: &DMatrix<f64>,
    xg: &DMatrix<f64>,
    u: &DMatrix<f64>,
) -> Option<Vec<Vec<usize>>> {
    let n = m.nrows();
    let mut owner = vec![usize::MAX; n];
    for (b, idx) in blocks.iter().enumerate() {
        for &i in idx {
            owner[i] = b;
        }
    }
    if owner.contains(&usize::MAX) {
        return None;
    }
    let mut channel_owner = vec![usize::MAX; m.ncols()];
    for (ch, slot) in channel_owner.iter_mut().enumerate() {
        for i in 0..n {
            if m[(i, ch)] != 0.0 {
                if *slot != usize::MAX && *slot != owner[i] {
                    return None;
                }
                *slot = owner[i];
            }
        }
        if *slot == usize::MAX {
            return None;
        }
    }
    let cross_state = (0..n).any(|i| (0..n).any(|j| owner[i] != owner[j] && xg[(i, j)] != 0.0));
    let k = m.ncols();
    let cross_channel = (0..k).any(|i| (0..k).any(|j| channel_owner[i] != channel_owner[j] && u[(i, j)] != 0.0));
    if cross_state || cross_channel {
        return None;
    }
    Some(
        (0..blocks.len())
            .map(|b| (0..k).filter(|&ch| channel_owner[ch] == b).collect())
            .collect(),
    )
}

fn select(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

/// Stationary Riccati solution on a state partition whose blocks are
/// dynamically and economically decoupled; `None` if the data do not
/// decouple.
fn block_care(
    a: &DMatrix<f64>,
    m: &DMatrix<f64>,
    u: &DMatrix<f64>,
    xg: &DMatrix<f64>,
    blocks: &[Vec<usize>],
) -> Result<Option<DMatrix<f64>>> {
    let Some(channels) = channel_partition(blocks, m, xg, u) else {
        return Ok(None);
    };
    let n = a.nrows();
    let mut p = DMatrix::zeros(n, n);
    for (idx, ch) in blocks.iter().zip(&channels) {
        if idx.is_empty() {
            continue;
        }
        let ab = select(a, idx, idx);
        let mb = select(m, idx, ch);
        let xb = select(xg, idx, idx);
        let ub = select(u, ch, ch);
        let uinv = if ch.is_empty() {
            ub
        } else {
            ub.cholesky().map(|c| c.inverse()).ok_or_else(|| argument("control weight U must be positive definite"))?
        };
        let pb = solve_care(&ab, &mb, &uinv, &xb)?;
        for (bi, &i) in idx.iter().enumerate() {
            for (bj, &j) in idx.iter().enumerate() {
                p[(i, j)] = pb[(bi, bj)];
            }
        }
    }
    Ok(Some(p))
}

fn full_blocks(aug: &AugmentedLfm) -> Option<Vec<Vec<usize>>> {
    aug.block_structure.as_ref().map(|bs| bs.iter().map(|b| b.indices.clone()).collect())
}

fn physical_blocks(aug: &AugmentedLfm) -> Option<Vec<Vec<usize>>> {
    aug.block_structure.as_ref().map(|bs: &Vec<ModeBlock>| {
        bs.iter().filter(|b| b.n_physical > 0).map(|b| b.indices[..b.n_physical].to_vec()).collect()
    })
}

/// Infinite-horizon LQR on the augmented model: `P` from the algebraic
/// Riccati equation with state weight `blockdiag(X, 0)`, `gain = U⁻¹MᵀP`.
///
/// Models carrying a mode block structure with a cost that respects it are
/// solved one block at a time.
pub fn solve_stationary(aug: &AugmentedLfm, cost: &CostSpec) -> Result<LqrSolution> {
    cost.validate(aug.n_f, aug.m.ncols())?;
    check_stabilizable(aug)?;
    let uinv = cost.u_inverse()?;
    let xg = lift(aug, &cost.x);
    let by_blocks = match full_blocks(aug) {
        Some(blocks) => block_care(&aug.a, &aug.m, &cost.u, &xg, &blocks)?,
        None => None,
    };
    let p = match by_blocks {
        Some(p) => SymmetricPsdMatrix::symmetrized(p),
        None => solve_care(&aug.a, &aug.m, &uinv, &xg)?,
    };
    let gain = &uinv * aug.m.transpose() * p.as_matrix();
    Ok(LqrSolution { p, gain, n_f: aug.n_f, mode: LqrMode::Stationary })
}

fn physical_care(aug: &AugmentedLfm, cost: &CostSpec, uinv: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let af = aug.af();
    let mf = aug.mf();
    let by_blocks = match physical_blocks(aug) {
        Some(blocks) => block_care(&af, &mf, &cost.u, &cost.x, &blocks)?,
        None => None,
    };
    match by_blocks {
        Some(p) => Ok(p),
        None => Ok(solve_care(&af, &mf, uinv, &cost.x)?.into_inner()),
    }
}

/// Stationary LQR assembled from the plant-only Riccati solution `P_f` and
/// the cross block `P₁₂` solving
/// `(P_f M_f U⁻¹ M_fᵀ − A_fᵀ) P₁₂ − P₁₂ A_u = P_f B_f C_u`.
/// The latent block `P₂₂` follows from a Lyapunov equation in `A_u`.
pub fn gain_via_sylvester(aug: &AugmentedLfm, cost: &CostSpec) -> Result<LqrSolution> {
    cost.validate(aug.n_f, aug.m.ncols())?;
    check_stabilizable(aug)?;
    let (nf, nu) = (aug.n_f, aug.n_u);
    let uinv = cost.u_inverse()?;
    let pf = physical_care(aug, cost, &uinv)?;
    let mf = aug.mf();
    let sf = &mf * &uinv * mf.transpose();
    let af = aug.af();
    let au = aug.au();
    let coupling = aug.coupling();
    let left = &pf * &sf - af.transpose();
    let p12 = solve_sylvester(&left, &au, &(&pf * &coupling))?;
    let p21 = p12.transpose();
    let cross = coupling.transpose() * &p12;
    let source = &cross + cross.transpose() - &p21 * &sf * &p12;
    let p22 = if nu > 0 { solve_lyapunov(&au.transpose(), &source)?.into_inner() } else { DMatrix::zeros(0, 0) };

    let mut p = DMatrix::zeros(nf + nu, nf + nu);
    p.view_mut((0, 0), (nf, nf)).copy_from(&pf);
    p.view_mut((0, nf), (nf, nu)).copy_from(&p12);
    p.view_mut((nf, 0), (nu, nf)).copy_from(&p21);
    p.view_mut((nf, nf), (nu, nu)).copy_from(&p22);
    let umt = &uinv * mf.transpose();
    let mut gain = DMatrix::zeros(aug.m.ncols(), nf + nu);
    gain.columns_mut(0, nf).copy_from(&(&umt * &pf));
    gain.columns_mut(nf, nu).copy_from(&(&umt * &p12));
    Ok(LqrSolution { p: SymmetricPsdMatrix::symmetrized(p), gain, n_f: nf, mode: LqrMode::Stationary })
}

/// Controller designed as if the force were zero: the plant-only gain
/// `K_f = U⁻¹M_fᵀP_f`, embedded as `[K_f, 0]` over the augmented state.
pub fn basic_lqr_gain(aug: &AugmentedLfm, cost: &CostSpec) -> Result<LqrSolution> {
    cost.validate(aug.n_f, aug.m.ncols())?;
    check_stabilizable(aug)?;
    let (nf, nu) = (aug.n_f, aug.n_u);
    let uinv = cost.u_inverse()?;
    let pf = physical_care(aug, cost, &uinv)?;
    let mut p = DMatrix::zeros(nf + nu, nf + nu);
    p.view_mut((0, 0), (nf, nf)).copy_from(&pf);
    let mut gain = DMatrix::zeros(aug.m.ncols(), nf + nu);
    gain.columns_mut(0, nf).copy_from(&(&uinv * aug.mf().transpose() * &pf));
    Ok(LqrSolution { p: SymmetricPsdMatrix::symmetrized(p), gain, n_f: nf, mode: LqrMode::Stationary })
}

#[cfg(test)]
mod tests;
