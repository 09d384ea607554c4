//! Physical plants and the augmented latent force model.
//!
//! The augmented state stacks the physical state `f` on top of the latent
//! force states `z`:
//!
//! ```text
//! A = [[Af, Bf·Cu], [0, Au]]   B = [0; Bu]   C = [Cf, 0]   M = [Mf; 0]
//! ```

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{argument, dimension, LfmError, Result};
use crate::gpss::LtiGpRealization;
use crate::numlin::{block_diag, check_finite};

/// `df/dt = Af f + Bf u + Mf c`, `y = Cf f + ε`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LtiPhysicalSystem {
    pub af: DMatrix<f64>,
    pub bf: DMatrix<f64>,
    pub cf: DMatrix<f64>,
    pub mf: DMatrix<f64>,
    pub state_labels: Vec<String>,
}

impl LtiPhysicalSystem {
    pub fn new(
        af: DMatrix<f64>,
        bf: DMatrix<f64>,
        cf: DMatrix<f64>,
        mf: DMatrix<f64>,
        state_labels: Vec<String>,
    ) -> Result<Self> {
        let n = af.nrows();
        if !af.is_square() {
            return Err(dimension("Af must be square"));
        }
        if bf.nrows() != n || mf.nrows() != n || cf.ncols() != n {
            return Err(dimension(format!(
                "physical system with {n} states got Bf {}x{}, Cf {}x{}, Mf {}x{}",
                bf.nrows(),
                bf.ncols(),
                cf.nrows(),
                cf.ncols(),
                mf.nrows(),
                mf.ncols()
            )));
        }
        if state_labels.len() != n {
            return Err(dimension(format!("{} labels for {n} states", state_labels.len())));
        }
        for (m, name) in [(&af, "Af"), (&bf, "Bf"), (&cf, "Cf"), (&mf, "Mf")] {
            check_finite(m, name)?;
        }
        Ok(Self { af, bf, cf, mf, state_labels })
    }

    pub fn n_states(&self) -> usize {
        self.af.nrows()
    }

    pub fn n_forces(&self) -> usize {
        self.bf.ncols()
    }

    pub fn n_controls(&self) -> usize {
        self.mf.ncols()
    }

    pub fn n_outputs(&self) -> usize {
        self.cf.nrows()
    }
}

/// Damped spring `f'' + λ f' + γ f = u + c` with position measurements.
pub fn build_spring(lambda: f64, gamma: f64) -> Result<LtiPhysicalSystem> {
    if !(lambda > 0.0 && gamma > 0.0 && lambda.is_finite() && gamma.is_finite()) {
        return Err(argument(format!(
            "spring damping and stiffness must be positive, got λ={lambda}, γ={gamma}"
        )));
    }
    LtiPhysicalSystem::new(
        DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -gamma, -lambda]),
        DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
        DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
        DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
        vec!["position".into(), "velocity".into()],
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Rect {
    pub const UNIT: Rect = Rect { x_min: 0.0, x_max: 1.0, y_min: 0.0, y_max: 1.0 };

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= self.x_min && p[0] <= self.x_max && p[1] >= self.y_min && p[1] <= self.y_max
    }
}

/// Heat equation `∂f/∂t = D ∇²f − λ f + u + c` on a rectangle with zero
/// Dirichlet boundaries, projected on tensor-product sine modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatConfig {
    pub diffusivity: f64,
    pub decay: f64,
    pub modes_per_axis: usize,
    pub domain: Rect,
    pub sensors: Vec<[f64; 2]>,
    /// Length-scale of the spatial SE prior on the latent source.
    pub space_ell: f64,
}

impl HeatConfig {
    /// `n × n` interior grid at `(i + 1) / (n + 1)` of each side.
    pub fn interior_grid(domain: Rect, per_axis: usize) -> Vec<[f64; 2]> {
        let mut pts = Vec::with_capacity(per_axis * per_axis);
        let step_x = domain.width() / (per_axis + 1) as f64;
        let step_y = domain.height() / (per_axis + 1) as f64;
        for i in 0..per_axis {
            for j in 0..per_axis {
                pts.push([
                    domain.x_min + step_x * (i + 1) as f64,
                    domain.y_min + step_y * (j + 1) as f64,
                ]);
            }
        }
        pts
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.diffusivity > 0.0 && self.decay > 0.0) {
            return Err(argument("heat diffusivity and decay must be positive"));
        }
        if self.modes_per_axis == 0 {
            return Err(argument("at least one mode per axis is required"));
        }
        if !(self.domain.width() > 0.0 && self.domain.height() > 0.0) {
            return Err(argument("heat domain must have positive extent"));
        }
        if !(self.space_ell > 0.0) {
            return Err(argument("spatial length-scale must be positive"));
        }
        if let Some(p) = self.sensors.iter().find(|p| !self.domain.contains(**p)) {
            return Err(argument(format!("sensor at ({}, {}) lies outside the domain", p[0], p[1])));
        }
        Ok(())
    }

    pub fn n_modes(&self) -> usize {
        self.modes_per_axis * self.modes_per_axis
    }

    /// `(j, k)` wave numbers (1-based) of mode index `idx`.
    pub fn mode_numbers(&self, idx: usize) -> (usize, usize) {
        (idx / self.modes_per_axis + 1, idx % self.modes_per_axis + 1)
    }

    /// Spatial frequencies `(jπ/L₁, kπ/L₂)` of mode `idx`.
    pub fn mode_frequencies(&self, idx: usize) -> (f64, f64) {
        let (j, k) = self.mode_numbers(idx);
        (j as f64 * PI / self.domain.width(), k as f64 * PI / self.domain.height())
    }

    /// Eigenvalue `−D((jπ/L₁)² + (kπ/L₂)²) − λ` of mode `idx`.
    pub fn mode_eigenvalue(&self, idx: usize) -> f64 {
        let (wx, wy) = self.mode_frequencies(idx);
        -self.diffusivity * (wx * wx + wy * wy) - self.decay
    }

    /// Orthonormal basis function `2 sin(jπx̃/L₁) sin(kπỹ/L₂) / √(L₁L₂)`.
    pub fn basis_value(&self, idx: usize, p: [f64; 2]) -> f64 {
        let (wx, wy) = self.mode_frequencies(idx);
        let norm = 2.0 / (self.domain.width() * self.domain.height()).sqrt();
        norm * (wx * (p[0] - self.domain.x_min)).sin() * (wy * (p[1] - self.domain.y_min)).sin()
    }

    /// Row vector evaluating the field with modal coefficients at `p`.
    pub fn evaluation_row(&self, p: [f64; 2]) -> DMatrix<f64> {
        DMatrix::from_fn(1, self.n_modes(), |_, idx| self.basis_value(idx, p))
    }
}

/// Fourier–Galerkin image of the heat equation on `cfg`'s sine basis.
pub fn build_heat_fourier(cfg: &HeatConfig) -> Result<LtiPhysicalSystem> {
    cfg.validate()?;
    let n = cfg.n_modes();
    let af = DMatrix::from_fn(n, n, |i, j| if i == j { cfg.mode_eigenvalue(i) } else { 0.0 });
    let cf = DMatrix::from_fn(cfg.sensors.len(), n, |s, idx| cfg.basis_value(idx, cfg.sensors[s]));
    let labels = (0..n)
        .map(|i| {
            let (j, k) = cfg.mode_numbers(i);
            format!("mode({j},{k})")
        })
        .collect();
    LtiPhysicalSystem::new(af, DMatrix::identity(n, n), cf, DMatrix::identity(n, n), labels)
}

/// Per-mode variance weights from the spatial SE spectrum, largest weight 1.
pub fn heat_force_weights(cfg: &HeatConfig) -> Vec<f64> {
    let ell2 = cfg.space_ell * cfg.space_ell;
    let log_w: Vec<f64> = (0..cfg.n_modes())
        .map(|i| {
            let (wx, wy) = cfg.mode_frequencies(i);
            -ell2 * (wx * wx + wy * wy) / 4.0
        })
        .collect();
    let top = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    log_w.into_iter().map(|l| (l - top).exp()).collect()
}

/// State indices of one decoupled block of the augmented model; the first
/// `n_physical` entries are physical states.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ModeBlock {
    pub indices: Vec<usize>,
    pub n_physical: usize,
}

/// Joint white-noise-driven model of plant plus latent forces.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AugmentedLfm {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub m: DMatrix<f64>,
    /// Diagonal spectral density of the driving white noise (one per channel).
    pub q: DMatrix<f64>,
    /// Readout `Cu` from latent state to force channels.
    pub cu: DMatrix<f64>,
    /// Stationary covariance of the latent block.
    pub latent_pinf: DMatrix<f64>,
    pub n_f: usize,
    pub n_u: usize,
    /// Present when `A` is block diagonal across modes.
    pub block_structure: Option<Vec<ModeBlock>>,
}

impl AugmentedLfm {
    pub fn dim(&self) -> usize {
        self.n_f + self.n_u
    }

    pub fn af(&self) -> DMatrix<f64> {
        self.a.view((0, 0), (self.n_f, self.n_f)).into_owned()
    }

    pub fn au(&self) -> DMatrix<f64> {
        self.a.view((self.n_f, self.n_f), (self.n_u, self.n_u)).into_owned()
    }

    /// Coupling block `Bf·Cu`.
    pub fn coupling(&self) -> DMatrix<f64> {
        self.a.view((0, self.n_f), (self.n_f, self.n_u)).into_owned()
    }

    pub fn mf(&self) -> DMatrix<f64> {
        self.m.rows(0, self.n_f).into_owned()
    }

    /// Latent-only model of a single GP, used for plain temporal regression.
    pub fn latent_only(force: &LtiGpRealization) -> Self {
        let s = force.state_dim();
        Self {
            a: force.f.clone(),
            b: force.l.clone(),
            c: DMatrix::zeros(0, s),
            m: DMatrix::zeros(s, 0),
            q: DMatrix::from_element(1, 1, force.q),
            cu: force.h.clone(),
            latent_pinf: force.pinf.as_matrix().clone(),
            n_f: 0,
            n_u: s,
            block_structure: None,
        }
    }

    /// Prior covariance `blockdiag(phys_var·I, P∞)`.
    pub fn prior_covariance(&self, phys_var: f64) -> DMatrix<f64> {
        let mut p = DMatrix::zeros(self.dim(), self.dim());
        for i in 0..self.n_f {
            p[(i, i)] = phys_var;
        }
        p.view_mut((self.n_f, self.n_f), (self.n_u, self.n_u)).copy_from(&self.latent_pinf);
        p
    }

    /// Checks the structural zeros of the block-triangular form.
    pub fn check_structure(&self) -> Result<()> {
        let (nf, nu) = (self.n_f, self.n_u);
        let zero = |m: nalgebra::DMatrixView<f64>| m.iter().all(|&v| v == 0.0);
        if !zero(self.a.view((nf, 0), (nu, nf))) {
            return Err(LfmError::Invariant("lower-left block of A is not zero".into()));
        }
        if !zero(self.b.view((0, 0), (nf, self.b.ncols()))) {
            return Err(LfmError::Invariant("physical rows of B are not zero".into()));
        }
        if !zero(self.m.view((nf, 0), (nu, self.m.ncols()))) {
            return Err(LfmError::Invariant("latent rows of M are not zero".into()));
        }
        if !zero(self.c.view((0, nf), (self.c.nrows(), nu))) {
            return Err(LfmError::Invariant("latent columns of C are not zero".into()));
        }
        Ok(())
    }
}

/// Stacks the plant and one latent GP per force channel.
pub fn augment(phys: &LtiPhysicalSystem, forces: &[LtiGpRealization]) -> Result<AugmentedLfm> {
    let p = phys.n_forces();
    if forces.len() != p {
        return Err(argument(format!(
            "plant has {p} force channels but {} realizations were given",
            forces.len()
        )));
    }
    let nf = phys.n_states();
    let au = block_diag(&forces.iter().map(|r| &r.f).collect::<Vec<_>>());
    let bu = block_diag(&forces.iter().map(|r| &r.l).collect::<Vec<_>>());
    let cu = block_diag(&forces.iter().map(|r| &r.h).collect::<Vec<_>>());
    let pinf = block_diag(&forces.iter().map(|r| r.pinf.as_matrix()).collect::<Vec<_>>());
    let nu = au.nrows();
    let n = nf + nu;

    let mut a = DMatrix::zeros(n, n);
    a.view_mut((0, 0), (nf, nf)).copy_from(&phys.af);
    a.view_mut((0, nf), (nf, nu)).copy_from(&(&phys.bf * &cu));
    a.view_mut((nf, nf), (nu, nu)).copy_from(&au);
    let mut b = DMatrix::zeros(n, p);
    b.view_mut((nf, 0), (nu, p)).copy_from(&bu);
    let mut c = DMatrix::zeros(phys.n_outputs(), n);
    c.view_mut((0, 0), (phys.n_outputs(), nf)).copy_from(&phys.cf);
    let mut m = DMatrix::zeros(n, phys.n_controls());
    m.view_mut((0, 0), (nf, phys.n_controls())).copy_from(&phys.mf);
    let q = DMatrix::from_fn(p, p, |i, j| if i == j { forces[i].q } else { 0.0 });

    let block_structure = mode_blocks(phys, forces);
    Ok(AugmentedLfm { a, b, c, m, q, cu, latent_pinf: pinf, n_f: nf, n_u: nu, block_structure })
}

/// Per-mode blocks when `Af` is diagonal and every force channel drives a
/// single mode.
fn mode_blocks(phys: &LtiPhysicalSystem, forces: &[LtiGpRealization]) -> Option<Vec<ModeBlock>> {
    let nf = phys.n_states();
    if nf < 2 {
        return None;
    }
    let af = &phys.af;
    let diagonal = (0..nf).all(|i| (0..nf).all(|j| i == j || af[(i, j)] == 0.0));
    if !diagonal {
        return None;
    }
    let mut blocks: Vec<ModeBlock> =
        (0..nf).map(|i| ModeBlock { indices: vec![i], n_physical: 1 }).collect();
    let mut offset = nf;
    for (ch, r) in forces.iter().enumerate() {
        let touched: Vec<usize> = (0..nf).filter(|&i| phys.bf[(i, ch)] != 0.0).collect();
        let s = r.state_dim();
        match touched.as_slice() {
            [mode] => blocks[*mode].indices.extend(offset..offset + s),
            [] => blocks.push(ModeBlock { indices: (offset..offset + s).collect(), n_physical: 0 }),
            _ => return None,
        }
        offset += s;
    }
    Some(blocks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gpss::{realize, CovarianceSpec};
    use crate::numlin::eigenvalues;
    use approx::assert_relative_eq;
    use nalgebra::dmatrix;

    fn unit_heat(modes: usize) -> HeatConfig {
        HeatConfig {
            diffusivity: 0.001,
            decay: 0.2,
            modes_per_axis: modes,
            domain: Rect::UNIT,
            sensors: HeatConfig::interior_grid(Rect::UNIT, 10),
            space_ell: 0.2,
        }
    }

    #[test]
    fn spring_matrices() {
        let s = build_spring(0.1, 1.0).unwrap();
        assert_eq!(s.af, dmatrix![0.0, 1.0; -1.0, -0.1]);
        assert_eq!(&s.cf * &s.bf, dmatrix![0.0]);
    }

    #[test]
    fn unit_spring_eigenvalues() {
        let s = build_spring(1.0, 1.0).unwrap();
        for e in eigenvalues(&s.af) {
            assert_relative_eq!(e.re, -0.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn spring_rejects_nonpositive_parameters() {
        assert!(build_spring(0.0, 1.0).is_err());
        assert!(build_spring(0.1, -1.0).is_err());
    }

    #[test]
    fn single_mode_heat_eigenvalue() {
        let sys = build_heat_fourier(&unit_heat(1)).unwrap();
        assert_relative_eq!(sys.af[(0, 0)], -0.2 - 0.001 * 2.0 * PI * PI, epsilon = 1e-15);
        assert_relative_eq!(sys.af[(0, 0)], -0.21974, epsilon = 1e-5);
    }

    #[test]
    fn heat_drift_is_negative_diagonal() {
        let sys = build_heat_fourier(&unit_heat(10)).unwrap();
        assert_eq!(sys.n_states(), 100);
        for i in 0..100 {
            assert!(sys.af[(i, i)] < 0.0);
            for j in 0..100 {
                if i != j {
                    assert_eq!(sys.af[(i, j)], 0.0);
                }
            }
        }
    }

    #[test]
    fn sensor_outside_domain_is_rejected() {
        let mut cfg = unit_heat(2);
        cfg.sensors.push([1.5, 0.5]);
        assert!(build_heat_fourier(&cfg).is_err());
    }

    #[test]
    fn force_weights() {
        let cfg = unit_heat(4);
        let w = heat_force_weights(&cfg);
        assert_eq!(w[0], 1.0);
        let mut by_radius: Vec<(usize, f64)> = (0..cfg.n_modes())
            .map(|i| {
                let (j, k) = cfg.mode_numbers(i);
                (j * j + k * k, w[i])
            })
            .collect();
        by_radius.sort_by_key(|x| x.0);
        for pair in by_radius.windows(2) {
            assert!(pair[1].1 <= pair[0].1);
        }
        let flat = heat_force_weights(&HeatConfig { space_ell: 1e-6, ..cfg });
        assert!(flat.iter().all(|&v| (v - 1.0).abs() < 1e-9));
    }

    #[test]
    fn spring_matern_augmentation() {
        let phys = build_spring(0.1, 1.0).unwrap();
        let force = realize(&CovarianceSpec::matern_half(1.0, 2.0)).unwrap();
        let aug = augment(&phys, &[force]).unwrap();
        assert_relative_eq!(
            aug.a,
            dmatrix![0.0, 1.0, 0.0; -1.0, -0.1, 1.0; 0.0, 0.0, -0.5],
            epsilon = 1e-15
        );
        assert_eq!(aug.m, dmatrix![0.0; 1.0; 0.0]);
        assert_eq!(aug.c, dmatrix![1.0, 0.0, 0.0]);
        aug.check_structure().unwrap();
        assert!(aug.block_structure.is_none());
    }

    #[test]
    fn channel_count_mismatch() {
        let phys = build_spring(0.1, 1.0).unwrap();
        assert!(augment(&phys, &[]).is_err());
    }

    #[test]
    fn heat_augmentation_blocks() {
        let cfg = unit_heat(10);
        let phys = build_heat_fourier(&cfg).unwrap();
        let force = realize(&CovarianceSpec::matern_half(1.0, 1.0)).unwrap();
        let aug = augment(&phys, &vec![force; 100]).unwrap();
        assert_eq!(aug.dim(), 200);
        let blocks = aug.block_structure.as_ref().unwrap();
        assert_eq!(blocks.len(), 100);
        assert!(blocks.iter().all(|b| b.indices.len() == 2 && b.n_physical == 1));
        aug.check_structure().unwrap();
    }
}
