//! Preconditioned BiCGSTAB with pluggable preconditioners.
//!
//! The solver implements the two-sided form: with lower/upper
//! preconditioners `K1` and `K2`, it iterates on `K1^-1 A K2^-1` in
//! the transformed variable `y = K2 x` and maps back with
//! `x = K2^-1 y` at the end. Convergence is declared when the
//! preconditioned residual norm drops below `tol` times its initial
//! value (an absolute mode is available behind a flag); a vanishing
//! intermediate `s` converges at the half iteration. All norms are
//! Euclidean. Dot products reduce over a fixed pairwise tree, so a
//! solve is reproducible run to run at any worker count.
//!
//! Preconditioners:
//! - identity: exact no-ops.
//! - ILU0 two-solve: `K1 = L` (lower solve), `K2 = U` (upper solve;
//!   `K2*x` applies U by sparse triangular matrix-vector product).
//! - ILDU0 (fused or unfused): the whole preconditioner acts as `K1 =
//!   L*D*U_unit` with `K2 = I`, so each application is the composition
//!   `U_unit^-1 * D^-1 * L_unit^-1` - executed either as one fused
//!   subdomain pass or as three separate passes. Both run the same
//!   per-row arithmetic in the same order, which is what makes the
//!   fused/unfused comparison meaningful down to the bit level with
//!   the vertex-centric strategy.

use crate::factor::{
    ildu0, ilu0_bsr, ilu0_decomposed, FactorError, IlduFactors, IlduFactorsBsr, IluFactors,
    IluFactorsBsr,
};
use crate::partition::{Permutation, SubdomainLayout};
use crate::schedule::{
    build_level_schedule, level_assign_lower, level_assign_lower_bsr, level_assign_upper,
    level_assign_upper_bsr, LevelSchedule, ScheduleError, ScheduleSummary,
};
use crate::sparsemat::{BsrMatrix, CsrMatrix, LinearOperator, SparseError};
use crate::trisolve::{
    apply_ildu0_fused, apply_ildu0_fused_bsr, apply_ildu0_unfused, apply_ildu0_unfused_bsr,
    solve_with, SolveContext, SolveStrategy, StrategyKind, TriFactor, TrisolveError,
};
use serde::Serialize;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum KrylovError {
    #[error("operand has length {got}, system dimension is {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid solver config: {0}")]
    Config(&'static str),
    #[error(transparent)]
    Factor(#[from] FactorError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Trisolve(#[from] TrisolveError),
    #[error(transparent)]
    Sparse(#[from] SparseError),
}

/// Solver configuration.
#[derive(Debug, Clone, Copy)]
pub struct BicgstabConfig {
    /// Convergence tolerance, relative to the initial preconditioned
    /// residual norm unless `absolute_tol` is set.
    pub tol: f64,
    pub max_iter: usize,
    /// Smallness threshold for `rho`, `v . r0` and `t . t`; crossing it
    /// reports a breakdown instead of silently dividing.
    pub breakdown_eps: f64,
    pub absolute_tol: bool,
}

impl Default for BicgstabConfig {
    fn default() -> Self {
        BicgstabConfig {
            tol: 1e-8,
            max_iter: 1000,
            breakdown_eps: 1e-30,
            absolute_tol: false,
        }
    }
}

/// Why a solve stopped before converging.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Breakdown {
    RhoVanished,
    OmegaVanished,
    VDotR0Vanished,
    TDotTVanished,
}

/// Wall-clock time spent per operation class, in milliseconds.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct PhaseTimings {
    pub spmv_ms: f64,
    pub precond_ms: f64,
    pub blas1_ms: f64,
}

/// Outcome record of one solve.
#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    /// Completed iterations (half-iteration exits count as one).
    pub iterations: usize,
    pub converged: bool,
    /// Preconditioned residual norms: the initial residual followed by
    /// one value per completed iteration.
    pub residual_history: Vec<f64>,
    pub breakdown_reason: Option<Breakdown>,
    pub timings: PhaseTimings,
}

impl SolveReport {
    pub fn final_residual(&self) -> f64 {
        *self.residual_history.last().unwrap_or(&f64::NAN)
    }
}

/// Two-sided preconditioner interface: `K1^-1`, `K2^-1`, and the
/// forward `K2` needed to initialize `y0 = K2 x0`.
pub trait Preconditioner: Send + Sync {
    fn apply_left_inverse(&self, v: &[f64]) -> Result<Vec<f64>, KrylovError>;
    fn apply_right_inverse(&self, v: &[f64]) -> Result<Vec<f64>, KrylovError>;
    fn apply_right(&self, v: &[f64]) -> Result<Vec<f64>, KrylovError>;
}

/// Exact no-op preconditioner.
pub struct IdentityPreconditioner;

impl Preconditioner for IdentityPreconditioner {
    fn apply_left_inverse(&self, v: &[f64]) -> Result<Vec<f64>, KrylovError> {
        Ok(v.to_vec())
    }

    fn apply_right_inverse(&self, v: &[f64]) -> Result<Vec<f64>, KrylovError> {
        Ok(v.to_vec())
    }

    fn apply_right(&self, v: &[f64]) -> Result<Vec<f64>, KrylovError> {
        Ok(v.to_vec())
    }
}

enum IluStore {
    Scalar(IluFactors),
    Block(IluFactorsBsr),
}

/// Two-solve ILU0 preconditioner: `K1 = L`, `K2 = U`.
pub struct Ilu0Preconditioner {
    store: IluStore,
    sched_l: LevelSchedule,
    sched_u: LevelSchedule,
    ctx: SolveContext,
}

impl Ilu0Preconditioner {
    /// Wraps existing factors, building both level schedules.
    pub fn from_factors(
        f: IluFactors,
        layout: &SubdomainLayout,
        strategy: SolveStrategy,
    ) -> Result<Self, KrylovError> {
        let sched_l = build_level_schedule(&level_assign_lower(&f.l, layout)?, layout);
        let sched_u = build_level_schedule(&level_assign_upper(&f.u, layout)?, layout);
        Ok(Ilu0Preconditioner {
            store: IluStore::Scalar(f),
            sched_l,
            sched_u,
            ctx: SolveContext::new(strategy)?,
        })
    }

    /// Factors the (decomposed) matrix and builds both level schedules.
    pub fn from_csr(
        a: &CsrMatrix,
        layout: &SubdomainLayout,
        strategy: SolveStrategy,
    ) -> Result<Self, KrylovError> {
        Self::from_factors(ilu0_decomposed(a, layout)?, layout, strategy)
    }

    pub fn from_factors_bsr(
        f: IluFactorsBsr,
        layout: &SubdomainLayout,
        strategy: SolveStrategy,
    ) -> Result<Self, KrylovError> {
        let sched_l = build_level_schedule(&level_assign_lower_bsr(&f.l, layout)?, layout);
        let sched_u = build_level_schedule(&level_assign_upper_bsr(&f.u, layout)?, layout);
        Ok(Ilu0Preconditioner {
            store: IluStore::Block(f),
            sched_l,
            sched_u,
            ctx: SolveContext::new(strategy)?,
        })
    }

    /// Block variant; `layout` addresses block rows.
    pub fn from_bsr(
        a: &BsrMatrix,
        layout: &SubdomainLayout,
        strategy: SolveStrategy,
    ) -> Result<Self, KrylovError> {
        Self::from_factors_bsr(ilu0_bsr(a)?, layout, strategy)
    }

    pub fn schedule_summaries(&self) -> (ScheduleSummary, ScheduleSummary) {
        (self.sched_l.summary(), self.sched_u.summary())
    }
}

impl Preconditioner for Ilu0Preconditioner {
    fn apply_left_inverse(&self, v: &[f64]) -> Result<Vec<f64>, KrylovError> {
        Ok(match &self.store {
            IluStore::Scalar(f) => {
                solve_with(&self.ctx, &TriFactor::unit_lower(&f.l), v, &self.sched_l)?
            }
            IluStore::Block(f) => {
                solve_with(&self.ctx, &TriFactor::unit_lower_bsr(&f.l), v, &self.sched_l)?
            }
        })
    }

    fn apply_right_inverse(&self, v: &[f64]) -> Result<Vec<f64>, KrylovError> {
        Ok(match &self.store {
            IluStore::Scalar(f) => {
                solve_with(&self.ctx, &TriFactor::upper_with_diag(&f.u), v, &self.sched_u)?
            }
            IluStore::Block(f) => solve_with(
                &self.ctx,
                &TriFactor::upper_with_diag_bsr(&f.u),
                v,
                &self.sched_u,
            )?,
        })
    }

    fn apply_right(&self, v: &[f64]) -> Result<Vec<f64>, KrylovError> {
        Ok(match &self.store {
            IluStore::Scalar(f) => f.u.spmv(v)?,
            IluStore::Block(f) => f.u.spmv(v)?,
        })
    }
}

enum IlduStore {
    Scalar(IlduFactors),
    Block(IlduFactorsBsr),
}

/// ILDU0 preconditioner applied as one combined operation
/// `M^-1 = U_unit^-1 * D^-1 * L_unit^-1` (`K1 = M`, `K2 = I`), either
/// fused into a single subdomain pass or as the unfused three-step
/// composition.
pub struct Ildu0Preconditioner {
    store: IlduStore,
    sched_l: LevelSchedule,
    sched_u: LevelSchedule,
    ctx: SolveContext,
    fused: bool,
}

impl Ildu0Preconditioner {
    /// Wraps existing factors, building schedules for both unit factors.
    pub fn from_factors(
        f: IlduFactors,
        layout: &SubdomainLayout,
        strategy: SolveStrategy,
        fused: bool,
    ) -> Result<Self, KrylovError> {
        if fused
            && !matches!(strategy.kind, StrategyKind::LevelVc | StrategyKind::LevelEc)
        {
            return Err(TrisolveError::FusedNeedsLevels(strategy.kind).into());
        }
        let sched_l = build_level_schedule(&level_assign_lower(&f.l_unit, layout)?, layout);
        let sched_u = build_level_schedule(&level_assign_upper(&f.u_unit, layout)?, layout);
        Ok(Ildu0Preconditioner {
            store: IlduStore::Scalar(f),
            sched_l,
            sched_u,
            ctx: SolveContext::new(strategy)?,
            fused,
        })
    }

    /// Factors the (decomposed) matrix first, then wraps the result.
    pub fn from_csr(
        a: &CsrMatrix,
        layout: &SubdomainLayout,
        strategy: SolveStrategy,
        fused: bool,
    ) -> Result<Self, KrylovError> {
        let f = ildu0(&ilu0_decomposed(a, layout)?)?;
        Self::from_factors(f, layout, strategy, fused)
    }

    pub fn from_factors_bsr(
        f: IlduFactorsBsr,
        layout: &SubdomainLayout,
        strategy: SolveStrategy,
        fused: bool,
    ) -> Result<Self, KrylovError> {
        if fused
            && !matches!(strategy.kind, StrategyKind::LevelVc | StrategyKind::LevelEc)
        {
            return Err(TrisolveError::FusedNeedsLevels(strategy.kind).into());
        }
        let sched_l = build_level_schedule(&level_assign_lower_bsr(&f.l_unit, layout)?, layout);
        let sched_u = build_level_schedule(&level_assign_upper_bsr(&f.u_unit, layout)?, layout);
        Ok(Ildu0Preconditioner {
            store: IlduStore::Block(f),
            sched_l,
            sched_u,
            ctx: SolveContext::new(strategy)?,
            fused,
        })
    }

    pub fn from_bsr(
        a: &BsrMatrix,
        layout: &SubdomainLayout,
        strategy: SolveStrategy,
        fused: bool,
    ) -> Result<Self, KrylovError> {
        let f = crate::factor::ildu0_bsr(&ilu0_bsr(a)?)?;
        Self::from_factors_bsr(f, layout, strategy, fused)
    }

    pub fn schedule_summaries(&self) -> (ScheduleSummary, ScheduleSummary) {
        (self.sched_l.summary(), self.sched_u.summary())
    }
}

impl Preconditioner for Ildu0Preconditioner {
    fn apply_left_inverse(&self, v: &[f64]) -> Result<Vec<f64>, KrylovError> {
        let out = match (&self.store, self.fused) {
            (IlduStore::Scalar(f), true) => {
                apply_ildu0_fused(&self.ctx, f, &self.sched_l, &self.sched_u, v)?
            }
            (IlduStore::Scalar(f), false) => {
                apply_ildu0_unfused(&self.ctx, f, &self.sched_l, &self.sched_u, v)?
            }
            (IlduStore::Block(f), true) => {
                apply_ildu0_fused_bsr(&self.ctx, f, &self.sched_l, &self.sched_u, v)?
            }
            (IlduStore::Block(f), false) => {
                apply_ildu0_unfused_bsr(&self.ctx, f, &self.sched_l, &self.sched_u, v)?
            }
        };
        Ok(out)
    }

    fn apply_right_inverse(&self, v: &[f64]) -> Result<Vec<f64>, KrylovError> {
        Ok(v.to_vec())
    }

    fn apply_right(&self, v: &[f64]) -> Result<Vec<f64>, KrylovError> {
        Ok(v.to_vec())
    }
}

/// Builds the two-solve ILU0 preconditioner from the decomposed matrix.
pub fn make_ilu0_preconditioner(
    a_decomposed: &CsrMatrix,
    layout: &SubdomainLayout,
    strategy: SolveStrategy,
) -> Result<Ilu0Preconditioner, KrylovError> {
    Ilu0Preconditioner::from_csr(a_decomposed, layout, strategy)
}

/// Wraps ILDU0 factors as the fused single-pass preconditioner.
pub fn make_ildu0_fused_preconditioner(
    f: IlduFactors,
    layout: &SubdomainLayout,
    strategy: SolveStrategy,
) -> Result<Ildu0Preconditioner, KrylovError> {
    Ildu0Preconditioner::from_factors(f, layout, strategy, true)
}

/// Gathers a right-hand side into reordered (solver) space.
pub fn permute_rhs(perm: &Permutation, v: &[f64]) -> Vec<f64> {
    perm.permute(v)
}

/// Scatters a reordered solution back to the original row order.
pub fn unpermute_solution(perm: &Permutation, v: &[f64]) -> Vec<f64> {
    perm.unpermute(v)
}

/// Dot product over a fixed pairwise reduction tree (leaves of 256
/// elements). The tree shape depends only on the length, so results
/// are identical across runs and worker counts.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "dot operand lengths");
    pairwise(a, b)
}

fn pairwise(a: &[f64], b: &[f64]) -> f64 {
    if a.len() <= 256 {
        let mut acc = 0.0;
        for (x, y) in a.iter().zip(b) {
            acc += x * y;
        }
        return acc;
    }
    let mid = a.len() / 2;
    pairwise(&a[..mid], &b[..mid]) + pairwise(&a[mid..], &b[mid..])
}

/// Euclidean norm via [`dot`].
pub fn norm2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

#[inline]
fn ms_since(t0: Instant) -> f64 {
    t0.elapsed().as_secs_f64() * 1e3
}

/// Scalars of one full iteration, exposed for cross-checking against
/// independent implementations.
#[derive(Debug, Clone, Copy)]
pub struct IterationScalars {
    pub rho: f64,
    pub alpha: f64,
    pub omega: f64,
}

/// Preconditioned BiCGSTAB on `A x = b` starting from `x0`.
///
/// Breakdowns and iteration exhaustion are reported in the
/// [`SolveReport`] (with the best iterate so far), not as errors;
/// errors are reserved for structural problems.
pub fn bicgstab(
    a: &dyn LinearOperator,
    b: &[f64],
    x0: &[f64],
    m: &dyn Preconditioner,
    cfg: &BicgstabConfig,
) -> Result<(Vec<f64>, SolveReport), KrylovError> {
    let (x, report, _) = bicgstab_traced(a, b, x0, m, cfg)?;
    Ok((x, report))
}

/// [`bicgstab`] plus the per-iteration scalar trace; half-iteration
/// exits record no entry (omega is never formed there).
pub fn bicgstab_traced(
    a: &dyn LinearOperator,
    b: &[f64],
    x0: &[f64],
    m: &dyn Preconditioner,
    cfg: &BicgstabConfig,
) -> Result<(Vec<f64>, SolveReport, Vec<IterationScalars>), KrylovError> {
    let n = a.dim();
    if b.len() != n {
        return Err(KrylovError::DimensionMismatch {
            expected: n,
            got: b.len(),
        });
    }
    if x0.len() != n {
        return Err(KrylovError::DimensionMismatch {
            expected: n,
            got: x0.len(),
        });
    }
    if cfg.tol <= 0.0 {
        return Err(KrylovError::Config("tol must be > 0"));
    }
    if cfg.max_iter == 0 {
        return Err(KrylovError::Config("max_iter must be >= 1"));
    }

    let mut tm = PhaseTimings::default();
    let apply_op = |w: &[f64], tm: &mut PhaseTimings| -> Result<Vec<f64>, KrylovError> {
        let t0 = Instant::now();
        let z = m.apply_right_inverse(w)?;
        tm.precond_ms += ms_since(t0);
        let t0 = Instant::now();
        let az = a.apply(&z);
        tm.spmv_ms += ms_since(t0);
        let t0 = Instant::now();
        let out = m.apply_left_inverse(&az)?;
        tm.precond_ms += ms_since(t0);
        Ok(out)
    };

    // y0 = K2 x0 ; r0 = K1^-1 b - K1^-1 A K2^-1 y0
    let t0 = Instant::now();
    let mut y = m.apply_right(x0)?;
    let k1b = m.apply_left_inverse(b)?;
    tm.precond_ms += ms_since(t0);
    let op_y = apply_op(&y, &mut tm)?;
    let mut r: Vec<f64> = k1b.iter().zip(&op_y).map(|(kb, oy)| kb - oy).collect();

    let r0_hat = r.clone();
    let mut p = r.clone();
    let t0 = Instant::now();
    let mut rho = dot(&r, &r);
    let res0 = rho.sqrt();
    tm.blas1_ms += ms_since(t0);

    let mut history = vec![res0];
    let threshold = if cfg.absolute_tol { cfg.tol } else { cfg.tol * res0 };
    let mut converged = res0 == 0.0;
    let mut breakdown = None;
    let mut trace = Vec::new();

    if !converged {
        for _ in 0..cfg.max_iter {
            let v = apply_op(&p, &mut tm)?;

            let t0 = Instant::now();
            let v_r0 = dot(&v, &r0_hat);
            if v_r0.abs() < cfg.breakdown_eps {
                breakdown = Some(Breakdown::VDotR0Vanished);
                tm.blas1_ms += ms_since(t0);
                break;
            }
            let alpha = rho / v_r0;
            let s: Vec<f64> = r.iter().zip(&v).map(|(ri, vi)| ri - alpha * vi).collect();
            let s_norm = norm2(&s);
            tm.blas1_ms += ms_since(t0);

            if s_norm < threshold {
                // half-iteration convergence: omega would be 0/0 on s = 0
                let t0 = Instant::now();
                for (yi, pi) in y.iter_mut().zip(&p) {
                    *yi += alpha * pi;
                }
                history.push(s_norm);
                tm.blas1_ms += ms_since(t0);
                converged = true;
                break;
            }

            let t_vec = apply_op(&s, &mut tm)?;

            let t0 = Instant::now();
            let t_t = dot(&t_vec, &t_vec);
            if t_t.abs() < cfg.breakdown_eps {
                breakdown = Some(Breakdown::TDotTVanished);
                tm.blas1_ms += ms_since(t0);
                break;
            }
            let omega = dot(&t_vec, &s) / t_t;
            trace.push(IterationScalars { rho, alpha, omega });
            for ((yi, pi), si) in y.iter_mut().zip(&p).zip(&s) {
                *yi += alpha * pi + omega * si;
            }
            r = s
                .iter()
                .zip(&t_vec)
                .map(|(si, ti)| si - omega * ti)
                .collect();
            let res_norm = norm2(&r);
            history.push(res_norm);
            if res_norm < threshold {
                tm.blas1_ms += ms_since(t0);
                converged = true;
                break;
            }
            let rho_next = dot(&r, &r0_hat);
            if rho_next.abs() < cfg.breakdown_eps {
                breakdown = Some(Breakdown::RhoVanished);
                tm.blas1_ms += ms_since(t0);
                break;
            }
            if omega.abs() < cfg.breakdown_eps {
                breakdown = Some(Breakdown::OmegaVanished);
                tm.blas1_ms += ms_since(t0);
                break;
            }
            let beta = (alpha / omega) * (rho_next / rho);
            p = r
                .iter()
                .zip(p.iter().zip(&v))
                .map(|(ri, (pi, vi))| ri + beta * (pi - omega * vi))
                .collect();
            rho = rho_next;
            tm.blas1_ms += ms_since(t0);
        }
    }

    // x = K2^-1 y
    let t0 = Instant::now();
    let x = m.apply_right_inverse(&y)?;
    tm.precond_ms += ms_since(t0);

    let report = SolveReport {
        iterations: history.len() - 1,
        converged,
        residual_history: history,
        breakdown_reason: breakdown,
        timings: tm,
    };
    Ok((x, report, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparsemat::CsrMatrix;

    #[test]
    fn identity_system_converges_in_one_half_iteration() {
        let a = CsrMatrix::identity(5);
        let b = vec![3.0, -1.0, 2.0, 0.5, 9.0];
        let (x, report) =
            bicgstab(&a, &b, &[0.0; 5], &IdentityPreconditioner, &BicgstabConfig::default())
                .unwrap();
        assert!(report.converged);
        assert_eq!(report.iterations, 1);
        assert_eq!(x, b);
        assert_eq!(report.residual_history.len(), 2);
    }

    #[test]
    fn small_spd_system_exact_in_two_iterations() {
        // [[4,1],[1,3]] x = [1,2] -> x = [1/11, 7/11]
        let a = CsrMatrix::from_triplets(
            2,
            2,
            &[(0, 0, 4.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 3.0)],
        )
        .unwrap();
        let (x, report) = bicgstab(
            &a,
            &[1.0, 2.0],
            &[0.0, 0.0],
            &IdentityPreconditioner,
            &BicgstabConfig::default(),
        )
        .unwrap();
        assert!(report.converged);
        assert!(report.iterations <= 2);
        assert!((x[0] - 1.0 / 11.0).abs() < 1e-10);
        assert!((x[1] - 7.0 / 11.0).abs() < 1e-10);
    }

    #[test]
    fn zero_rhs_converges_immediately() {
        let a = CsrMatrix::identity(3);
        let (x, report) = bicgstab(
            &a,
            &[0.0; 3],
            &[0.0; 3],
            &IdentityPreconditioner,
            &BicgstabConfig::default(),
        )
        .unwrap();
        assert!(report.converged);
        assert_eq!(report.iterations, 0);
        assert_eq!(x, vec![0.0; 3]);
    }

    #[test]
    fn config_validation() {
        let a = CsrMatrix::identity(2);
        let bad = BicgstabConfig {
            tol: 0.0,
            ..Default::default()
        };
        assert!(matches!(
            bicgstab(&a, &[1.0, 1.0], &[0.0, 0.0], &IdentityPreconditioner, &bad),
            Err(KrylovError::Config(_))
        ));
    }

    #[test]
    fn orthogonal_shadow_reports_breakdown() {
        // skew system: v = A r0 is orthogonal to r0, so v.r0 = 0 on
        // the first iteration
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 1, 1.0), (1, 0, -1.0)]).unwrap();
        let (_, report) = bicgstab(
            &a,
            &[1.0, 1.0],
            &[0.0, 0.0],
            &IdentityPreconditioner,
            &BicgstabConfig::default(),
        )
        .unwrap();
        assert!(!report.converged);
        assert_eq!(report.breakdown_reason, Some(Breakdown::VDotR0Vanished));
        assert_eq!(report.iterations, 0);
    }

    #[test]
    fn absolute_tolerance_mode() {
        let a = CsrMatrix::from_triplets(
            2,
            2,
            &[(0, 0, 4.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 3.0)],
        )
        .unwrap();
        // loose absolute threshold already holds after one iteration
        let cfg = BicgstabConfig {
            tol: 1e-1,
            absolute_tol: true,
            ..Default::default()
        };
        let (_, report) =
            bicgstab(&a, &[1.0, 2.0], &[0.0, 0.0], &IdentityPreconditioner, &cfg).unwrap();
        assert!(report.converged);
        assert!(report.final_residual() < 1e-1);
    }

    #[test]
    fn pairwise_dot_matches_naive_closely() {
        let a: Vec<f64> = (0..1000).map(|i| (i as f64).sin()).collect();
        let b: Vec<f64> = (0..1000).map(|i| (i as f64 * 0.37).cos()).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((dot(&a, &b) - naive).abs() < 1e-12 * naive.abs().max(1.0));
    }
}
