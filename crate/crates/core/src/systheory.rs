//! Observability, controllability, detectability and stabilizability tests
//! for (augmented) linear systems.
//!
//! Krylov matrices are built to depth `N` (Cayley–Hamilton). Before taking
//! ranks, `A` is divided by its Frobenius norm; this rescales each Krylov
//! block by a positive constant and so leaves the rank unchanged while
//! keeping high powers representable.

use std::f64::consts::PI;

use nalgebra::{Complex, DMatrix};
use serde::Serialize;

use crate::error::{argument, LfmError, Result};
use crate::model::AugmentedLfm;
use crate::numlin::{eigenvalues, numerical_rank, DEFAULT_RANK_TOL, HURWITZ_TOL};

/// Tolerance used when comparing eigenvalues for sampling aliasing.
pub const ALIASING_TOL: f64 = 1e-9;

fn krylov_scale(a: &DMatrix<f64>) -> f64 {
    let n = a.norm();
    if n > 0.0 {
        n
    } else {
        1.0
    }
}

/// `[M, A M, …, A^{N−1} M]`.
pub fn controllability_matrix(a: &DMatrix<f64>, m: &DMatrix<f64>) -> DMatrix<f64> {
    krylov_columns(a, m, 1.0)
}

fn krylov_columns(a: &DMatrix<f64>, m: &DMatrix<f64>, scale: f64) -> DMatrix<f64> {
    let n = a.nrows();
    let k = m.ncols();
    let mut out = DMatrix::zeros(n, n * k);
    let mut block = m.clone();
    let a_scaled = a / scale;
    for d in 0..n {
        out.view_mut((0, d * k), (n, k)).copy_from(&block);
        block = &a_scaled * block;
    }
    out
}

/// `[C; C A; …; C A^{N−1}]`.
pub fn observability_matrix(a: &DMatrix<f64>, c: &DMatrix<f64>) -> DMatrix<f64> {
    krylov_columns(&a.transpose(), &c.transpose(), 1.0).transpose()
}

pub fn observability_rank(a: &DMatrix<f64>, c: &DMatrix<f64>) -> usize {
    let scaled = krylov_columns(&a.transpose(), &c.transpose(), krylov_scale(a));
    numerical_rank(&scaled, DEFAULT_RANK_TOL)
}

pub fn controllability_rank(a: &DMatrix<f64>, m: &DMatrix<f64>) -> usize {
    numerical_rank(&krylov_columns(a, m, krylov_scale(a)), DEFAULT_RANK_TOL)
}

/// Rank of `[C M, C A M, …, C A^{N−1} M]`; output controllable iff it equals
/// the row count of `cout`.
pub fn output_controllability_rank(a: &DMatrix<f64>, m: &DMatrix<f64>, cout: &DMatrix<f64>) -> usize {
    let k = krylov_columns(a, m, krylov_scale(a));
    numerical_rank(&(cout * k), DEFAULT_RANK_TOL)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankWitness {
    pub rank: usize,
    pub required: usize,
    pub holds: bool,
}

impl RankWitness {
    fn new(rank: usize, required: usize) -> Self {
        Self { rank, required, holds: rank == required }
    }
}

/// Evidence that the latent force block is uncontrollable.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NonControllabilityWitness {
    pub controllability_rank: usize,
    pub state_dim: usize,
    pub physical_dim: usize,
    pub latent_rows_zero: bool,
}

/// Verifies that the latent rows of `[M, AM, …]` vanish and that the
/// controllability rank does not exceed the physical dimension.
pub fn assert_not_controllable(aug: &AugmentedLfm) -> Result<NonControllabilityWitness> {
    if aug.n_u == 0 {
        return Err(argument("model has no latent force states"));
    }
    let k = controllability_matrix(&aug.a, &aug.m);
    let latent_rows_zero = k.rows(aug.n_f, aug.n_u).iter().all(|&v| v == 0.0);
    let rank = controllability_rank(&aug.a, &aug.m);
    let witness = NonControllabilityWitness {
        controllability_rank: rank,
        state_dim: aug.dim(),
        physical_dim: aug.n_f,
        latent_rows_zero,
    };
    if !latent_rows_zero || rank > aug.n_f {
        return Err(LfmError::Invariant(format!(
            "augmented model violates non-controllability: {witness:?}"
        )));
    }
    Ok(witness)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EigenWitness {
    pub re: f64,
    pub im: f64,
    pub rank: usize,
    pub required: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PbhVerdict {
    pub holds: bool,
    /// Every eigenvalue with non-negative real part that was tested.
    pub checked: Vec<EigenWitness>,
    pub failures: Vec<EigenWitness>,
}

fn pbh(a: &DMatrix<f64>, other: &DMatrix<f64>, stack_columns: bool) -> PbhVerdict {
    let n = a.nrows();
    let ac = a.map(|v| Complex::new(v, 0.0));
    let oc = other.map(|v| Complex::new(v, 0.0));
    let mut checked = Vec::new();
    let mut failures = Vec::new();
    for lam in eigenvalues(a).into_iter().filter(|e| e.re >= HURWITZ_TOL) {
        // conjugate pairs give the same rank; test the upper one only
        if lam.im < 0.0 {
            continue;
        }
        let shifted = &ac - DMatrix::<Complex<f64>>::identity(n, n) * lam;
        let test = if stack_columns {
            let mut t = DMatrix::zeros(n, n + oc.ncols());
            t.view_mut((0, 0), (n, n)).copy_from(&shifted);
            t.view_mut((0, n), (n, oc.ncols())).copy_from(&oc);
            t
        } else {
            let mut t = DMatrix::zeros(n + oc.nrows(), n);
            t.view_mut((0, 0), (n, n)).copy_from(&shifted);
            t.view_mut((n, 0), (oc.nrows(), n)).copy_from(&oc);
            t
        };
        let rank = numerical_rank(&test, DEFAULT_RANK_TOL);
        let w = EigenWitness { re: lam.re, im: lam.im, rank, required: n };
        if rank < n {
            failures.push(w);
        }
        checked.push(w);
    }
    PbhVerdict { holds: failures.is_empty(), checked, failures }
}

/// PBH test: `rank [A − λI, M] = N` at every eigenvalue with `Re λ ≥ 0`.
pub fn pbh_stabilizability(a: &DMatrix<f64>, m: &DMatrix<f64>) -> PbhVerdict {
    pbh(a, m, true)
}

/// PBH test: `rank [A − λI; C] = N` at every eigenvalue with `Re λ ≥ 0`.
pub fn pbh_detectability(a: &DMatrix<f64>, c: &DMatrix<f64>) -> PbhVerdict {
    pbh(a, c, false)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AliasedPair {
    pub first: (f64, f64),
    pub second: (f64, f64),
    /// Integer `k` with `Im λᵢ − Im λⱼ = 2πk/dt`.
    pub multiple: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SamplingVerdict {
    pub dt: f64,
    pub critical: bool,
    pub eigenvalues: Vec<(f64, f64)>,
    pub aliased_pairs: Vec<AliasedPair>,
}

/// Flags sampling interval `dt` as critical when two distinct eigenvalues
/// share a real part and differ in imaginary part by a nonzero multiple of
/// `2π/dt`, so that `e^{λᵢ dt} = e^{λⱼ dt}`.
pub fn critical_sampling_check(a: &DMatrix<f64>, dt: f64) -> Result<SamplingVerdict> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(argument(format!("sampling interval must be positive, got {dt}")));
    }
    let eig = eigenvalues(a);
    let period = 2.0 * PI / dt;
    let mut pairs = Vec::new();
    for i in 0..eig.len() {
        for j in (i + 1)..eig.len() {
            let (li, lj) = (eig[i], eig[j]);
            let scale = 1.0 + li.norm().max(lj.norm());
            if (li - lj).norm() <= ALIASING_TOL * scale {
                continue;
            }
            if (li.re - lj.re).abs() > ALIASING_TOL * scale {
                continue;
            }
            let gap = li.im - lj.im;
            let k = (gap / period).round();
            if k != 0.0 && (gap - k * period).abs() <= ALIASING_TOL * scale {
                pairs.push(AliasedPair {
                    first: (li.re, li.im),
                    second: (lj.re, lj.im),
                    multiple: k as i64,
                });
            }
        }
    }
    Ok(SamplingVerdict {
        dt,
        critical: !pairs.is_empty(),
        eigenvalues: eig.iter().map(|e| (e.re, e.im)).collect(),
        aliased_pairs: pairs,
    })
}

/// Full set of system-theoretic verdicts for an augmented model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificationReport {
    pub state_dim: usize,
    pub physical_dim: usize,
    pub latent_dim: usize,
    pub observable: bool,
    pub observability: RankWitness,
    pub physical_observability: RankWitness,
    pub controllable: bool,
    pub controllability: RankWitness,
    pub physical_controllability: RankWitness,
    pub output_controllable: bool,
    pub output_controllability: RankWitness,
    pub latent_rows_of_controllability_zero: bool,
    pub stabilizable: PbhVerdict,
    pub physical_stabilizable: PbhVerdict,
    pub detectable: PbhVerdict,
    pub sampling: SamplingVerdict,
    pub discrete_observability: RankWitness,
    pub rank_tolerance: f64,
    pub eigenvalue_tolerance: f64,
    pub aliasing_tolerance: f64,
}

/// Runs every test on `aug` with measurement matrix `c` sampled every `dt`.
pub fn certify(aug: &AugmentedLfm, c: &DMatrix<f64>, dt: f64) -> Result<CertificationReport> {
    let n = aug.dim();
    let (af, mf) = (aug.af(), aug.mf());
    let cf = c.columns(0, aug.n_f).into_owned();
    let obs = RankWitness::new(observability_rank(&aug.a, c), n);
    let ctrl = RankWitness::new(controllability_rank(&aug.a, &aug.m), n);
    let phys_ctrl = RankWitness::new(controllability_rank(&af, &mf), aug.n_f);
    let mut selector = DMatrix::zeros(aug.n_f, n);
    selector.view_mut((0, 0), (aug.n_f, aug.n_f)).fill_with_identity();
    let out_ctrl = RankWitness::new(output_controllability_rank(&aug.a, &aug.m, &selector), aug.n_f);
    let k = controllability_matrix(&aug.a, &aug.m);
    let latent_zero = k.rows(aug.n_f, aug.n_u).iter().all(|&v| v == 0.0);
    let ad = crate::numlin::expm(&(&aug.a * dt))?;
    let discrete = RankWitness::new(observability_rank(&ad, c), n);
    Ok(CertificationReport {
        state_dim: n,
        physical_dim: aug.n_f,
        latent_dim: aug.n_u,
        observable: obs.holds,
        physical_observability: RankWitness::new(observability_rank(&af, &cf), aug.n_f),
        observability: obs,
        controllable: ctrl.holds,
        controllability: ctrl,
        physical_controllability: phys_ctrl,
        output_controllable: out_ctrl.holds,
        output_controllability: out_ctrl,
        latent_rows_of_controllability_zero: latent_zero,
        stabilizable: pbh_stabilizability(&aug.a, &aug.m),
        physical_stabilizable: pbh_stabilizability(&af, &mf),
        detectable: pbh_detectability(&aug.a, c),
        sampling: critical_sampling_check(&aug.a, dt)?,
        discrete_observability: discrete,
        rank_tolerance: DEFAULT_RANK_TOL,
        eigenvalue_tolerance: HURWITZ_TOL,
        aliasing_tolerance: ALIASING_TOL,
    })
}
