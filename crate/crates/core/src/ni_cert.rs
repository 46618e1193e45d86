//! Negative-imaginary certificates for discrete-time linear systems.
//!
//! A system `x[k+1] = A x[k] + B u[k]`, `y[k] = C x[k]` with `det(I − A) ≠ 0` is NI
//! with storage `V(x) = ½ xᵀPx` exactly when some `P = Pᵀ ≻ 0` satisfies
//!
//! ```text
//! AᵀPA − P ⪯ 0        and        C = Bᵀ(I − A)⁻ᵀ P.
//! ```
//!
//! [`verify_candidate`] checks a given `P`; [`find_certificate`] searches for one
//! with Dykstra's alternating projections; [`check_dissipation_empirical`] replays
//! the dissipation inequality `V(x[k+1]) − V(x[k]) ≤ u[k]ᵀ(y[k+1] − y[k])` along a
//! simulated trajectory.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::io::rows;
use crate::linalg::{self, DiscreteLyapunov};
use crate::state_space::{DiscreteStateSpace, FeedthroughStateSpace};

pub const DEFAULT_TOL: f64 = 1e-9;

/// Residuals of the NI conditions for a candidate storage matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NiResiduals {
    #[serde(rename = "min_eig_P")]
    pub min_eig_p: f64,
    /// Largest eigenvalue of `AᵀPA − P`.
    pub max_eig_lyap: f64,
    /// `‖C − Bᵀ(I−A)⁻ᵀP‖_F`.
    pub equality_residual: f64,
}

/// An accepted NI certificate. Only produced by [`verify_candidate`], so every
/// value of this type has passed the checks at `tol`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NiCertificate {
    #[serde(rename = "P", with = "rows")]
    p: DMatrix<f64>,
    #[serde(flatten)]
    residuals: NiResiduals,
    tol: f64,
}

impl NiCertificate {
    pub fn p(&self) -> &DMatrix<f64> {
        &self.p
    }
    pub fn residuals(&self) -> NiResiduals {
        self.residuals
    }
    pub fn min_eig_p(&self) -> f64 {
        self.residuals.min_eig_p
    }
    pub fn max_eig_lyap(&self) -> f64 {
        self.residuals.max_eig_lyap
    }
    pub fn equality_residual(&self) -> f64 {
        self.residuals.equality_residual
    }
    pub fn tol(&self) -> f64 {
        self.tol
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RejectReason {
    NotPositiveDefinite,
    LyapunovInequality,
    EqualityConstraint,
}

impl std::fmt::Display for RejectReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::NotPositiveDefinite => "P is not positive definite",
            Self::LyapunovInequality => "AᵀPA − P is not negative semidefinite",
            Self::EqualityConstraint => "C ≠ Bᵀ(I−A)⁻ᵀP",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CandidateVerdict {
    Accepted(NiCertificate),
    Rejected {
        residuals: NiResiduals,
        reasons: Vec<RejectReason>,
    },
}

impl CandidateVerdict {
    pub fn is_accepted(&self) -> bool {
        matches!(self, Self::Accepted(_))
    }

    pub fn residuals(&self) -> NiResiduals {
        match self {
            Self::Accepted(c) => c.residuals,
            Self::Rejected { residuals, .. } => *residuals,
        }
    }

    pub fn certificate(&self) -> Option<&NiCertificate> {
        match self {
            Self::Accepted(c) => Some(c),
            Self::Rejected { .. } => None,
        }
    }

    pub fn into_certificate(self) -> Option<NiCertificate> {
        match self {
            Self::Accepted(c) => Some(c),
            Self::Rejected { .. } => None,
        }
    }
}

/// `(I − A)⁻¹ B`.
fn dc_direction(sys: &DiscreteStateSpace) -> Result<DMatrix<f64>> {
    let ima = sys.i_minus_a()?;
    ima.lu()
        .solve(sys.b())
        .ok_or_else(|| Error::Numerical("I − A factorization failed".into()))
}

/// Computes the residuals of the NI conditions for `p`.
pub fn ni_residuals(sys: &DiscreteStateSpace, p: &DMatrix<f64>) -> Result<NiResiduals> {
    let n = sys.n();
    if p.nrows() != n || p.ncols() != n {
        return Err(Error::Dimension(format!(
            "P must be {n}x{n}, got {}x{}",
            p.nrows(),
            p.ncols()
        )));
    }
    linalg::require_symmetric("P", p)?;
    let g = dc_direction(sys)?;
    let a = sys.a();
    let lyap = a.transpose() * p * a - p;
    let eq = sys.c() - g.transpose() * p;
    Ok(NiResiduals {
        min_eig_p: linalg::min_eigenvalue(p),
        max_eig_lyap: linalg::max_eigenvalue(&lyap),
        equality_residual: eq.norm(),
    })
}

/// Checks a candidate storage matrix against the NI conditions.
///
/// Acceptance: `λ_min(P) > 0` (beyond rounding), `λ_max(AᵀPA − P) ≤ tol·(1 + ‖P‖_F)`
/// and `‖C − Bᵀ(I−A)⁻ᵀP‖_F ≤ tol·(1 + ‖C‖_F)`.
pub fn verify_candidate(
    sys: &DiscreteStateSpace,
    p: &DMatrix<f64>,
    tol: f64,
) -> Result<CandidateVerdict> {
    if !(tol.is_finite() && tol >= 0.0) {
        return Err(Error::InvalidInput(format!("tolerance must be non-negative, got {tol}")));
    }
    let residuals = ni_residuals(sys, p)?;
    let p_norm = p.norm();
    let mut reasons = Vec::new();
    let pd_floor = (sys.n() as f64) * f64::EPSILON * linalg::spectral_norm(p);
    if !(residuals.min_eig_p > pd_floor) {
        reasons.push(RejectReason::NotPositiveDefinite);
    }
    if !(residuals.max_eig_lyap <= tol * (1.0 + p_norm)) {
        reasons.push(RejectReason::LyapunovInequality);
    }
    if !(residuals.equality_residual <= tol * (1.0 + sys.c().norm())) {
        reasons.push(RejectReason::EqualityConstraint);
    }
    if reasons.is_empty() {
        Ok(CandidateVerdict::Accepted(NiCertificate {
            p: linalg::symmetrize(p),
            residuals,
            tol,
        }))
    } else {
        Ok(CandidateVerdict::Rejected { residuals, reasons })
    }
}

/// Parameters of the projection search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchOptions {
    /// Smallest relative positivity margin. The search starts with a margin of
    /// `1e-2` and shrinks it by `1e-2` per stage down to `eps`, splitting the
    /// iteration budget evenly between stages.
    pub eps: f64,
    pub max_iters: usize,
    /// Convergence threshold on successive iterates (relative Frobenius).
    pub step_tol: f64,
    /// Acceptance tolerance handed to [`verify_candidate`].
    pub tol: f64,
    /// Iterations between intermediate re-validations.
    pub check_every: usize,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            eps: 1e-8,
            max_iters: 5000,
            step_tol: 1e-11,
            tol: DEFAULT_TOL,
            check_every: 10,
        }
    }
}

/// Which parametrization the search ran in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SearchMethod {
    /// Variable `Q = P − AᵀPA ⪰ 0`, `P` recovered from the Lyapunov equation.
    /// Used when `A` is Schur stable.
    DecrementSpace,
    /// Variables `(P, S = AᵀPA − P)` with cones `P ⪰ εI`, `S ⪯ 0`.
    Lifted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoundCertificate {
    pub certificate: NiCertificate,
    pub iterations: usize,
    pub method: SearchMethod,
}

/// Returned when the search stops without a certificate. This is advisory: a
/// stalled projection search does not prove that the system is not NI.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InfeasibilityReport {
    pub iterations: usize,
    pub method: SearchMethod,
    /// Residuals of the last candidate, when one could be formed.
    pub residuals: Option<NiResiduals>,
    /// Relative residual of the equality constraint's least-squares solution;
    /// nonzero means the affine set is empty.
    pub affine_residual: f64,
    pub note: String,
}

pub const ADVISORY_NOTE: &str = "projection search stopped without a certificate; \
this is not a proof that the system is not negative imaginary";

#[derive(Debug, Clone, PartialEq)]
pub enum SearchOutcome {
    Found(FoundCertificate),
    Stalled(InfeasibilityReport),
}

impl SearchOutcome {
    pub fn certificate(&self) -> Option<&NiCertificate> {
        match self {
            Self::Found(f) => Some(&f.certificate),
            Self::Stalled(_) => None,
        }
    }

    pub fn iterations(&self) -> usize {
        match self {
            Self::Found(f) => f.iterations,
            Self::Stalled(r) => r.iterations,
        }
    }
}

/// Dykstra's method for the intersection of an affine set and a convex cone.
/// `accept` is polled every `check_every` iterations with the current iterate and
/// stops the loop when it returns true. Returns the final iterate, the iteration
/// count and whether the loop was stopped by `accept`.
fn dykstra(
    x0: DVector<f64>,
    project_affine: impl Fn(&DVector<f64>) -> DVector<f64>,
    project_cone: impl Fn(&DVector<f64>) -> DVector<f64>,
    opts: &SearchOptions,
    mut accept: impl FnMut(&DVector<f64>) -> bool,
) -> (DVector<f64>, usize, bool) {
    let mut x = x0;
    let mut inc_affine = DVector::zeros(x.len());
    let mut inc_cone = DVector::zeros(x.len());
    let every = opts.check_every.max(1);
    for it in 1..=opts.max_iters {
        let y = project_affine(&(&x + &inc_affine));
        inc_affine = &x + &inc_affine - &y;
        let next = project_cone(&(&y + &inc_cone));
        inc_cone = &y + &inc_cone - &next;
        let step = (&next - &x).norm();
        x = next;
        if step < opts.step_tol * x.norm().max(1.0) {
            return (x, it, false);
        }
        if it % every == 0 && accept(&x) {
            return (x, it, true);
        }
    }
    (x, opts.max_iters, false)
}

/// Balanced coordinates `x = diag(d) x̂` for the search, and the map back.
struct Balanced {
    scale: DVector<f64>,
    sys: DiscreteStateSpace,
}

impl Balanced {
    fn new(sys: &DiscreteStateSpace) -> Result<Self> {
        let scale = linalg::balance(sys.a());
        let d = DMatrix::from_diagonal(&scale);
        let dinv = DMatrix::from_diagonal(&scale.map(|v| 1.0 / v));
        let sys = DiscreteStateSpace::new(&dinv * sys.a() * &d, &dinv * sys.b(), sys.c() * &d)?;
        Ok(Self { scale, sys })
    }

    /// `P = D⁻¹ P̂ D⁻¹`.
    fn unscale(&self, p_hat: &DMatrix<f64>) -> DMatrix<f64> {
        let n = p_hat.nrows();
        linalg::symmetrize(&DMatrix::from_fn(n, n, |i, j| {
            p_hat[(i, j)] / (self.scale[i] * self.scale[j])
        }))
    }
}

fn vec_of(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

/// Searches for an NI certificate.
///
/// The feasible set `{P = Pᵀ : P(I−A)⁻¹B = Cᵀ, P ⪰ εI, AᵀPA − P ⪯ 0}` is
/// searched with Dykstra's alternating projections, starting from the
/// least-squares solution of the equality. Affine projections are least-squares
/// corrections; cone projections clip eigenvalues. Every candidate is
/// re-validated with [`verify_candidate`] in the original coordinates.
pub fn find_certificate(sys: &DiscreteStateSpace, opts: &SearchOptions) -> Result<SearchOutcome> {
    sys.i_minus_a()?;
    let bal = Balanced::new(sys)?;
    let schur_stable = linalg::spectral_radius(bal.sys.a())? < 1.0 - 1e-9;
    if schur_stable {
        if let Ok(lyap) = DiscreteLyapunov::new(bal.sys.a()) {
            return search_decrement_space(sys, &bal, &lyap, opts);
        }
    }
    search_lifted(sys, &bal, opts)
}

fn search_decrement_space(
    sys: &DiscreteStateSpace,
    bal: &Balanced,
    lyap: &DiscreteLyapunov,
    opts: &SearchOptions,
) -> Result<SearchOutcome> {
    let n = sys.n();
    let m = linalg::svec_len(n);
    let g = dc_direction(&bal.sys)?;
    let target = vec_of(&bal.sys.c().transpose());

    // Column k: vec(X(E_k) g), with X(Q) the Lyapunov solution for basis element E_k.
    let mut lmap = DMatrix::zeros(target.len(), m);
    for k in 0..m {
        let mut e = DVector::zeros(m);
        e[k] = 1.0;
        let x = lyap.solve(&linalg::smat(&e, n));
        lmap.set_column(k, &vec_of(&(x * &g)));
    }
    let lpinv = linalg::pinv(&lmap)?;
    let q0 = &lpinv * &target;
    let affine_residual = (&lmap * &q0 - &target).norm() / (1.0 + target.norm());
    let method = SearchMethod::DecrementSpace;
    if affine_residual > 1e-8 {
        return Ok(SearchOutcome::Stalled(InfeasibilityReport {
            iterations: 0,
            method,
            residuals: None,
            affine_residual,
            note: format!("equality constraint is inconsistent; {ADVISORY_NOTE}"),
        }));
    }

    let project_affine = |x: &DVector<f64>| x - &lpinv * (&lmap * x - &target);
    let candidate = |x: &DVector<f64>| -> DMatrix<f64> {
        let q = linalg::smat(&project_affine(x), n);
        bal.unscale(&lyap.solve(&q))
    };

    let margins = margin_schedule(opts.eps);
    let budget = SearchOptions {
        max_iters: (opts.max_iters / margins.len()).max(1),
        ..*opts
    };
    let mut iterations = 0;
    let mut x = q0.clone();
    let mut found: Option<NiCertificate> = None;
    for rel in margins {
        let margin = rel * q0.norm();
        let project_cone =
            |x: &DVector<f64>| linalg::svec(&linalg::clip_spectrum(&linalg::smat(x, n), Some(margin), None));
        let (last, used, _) = dykstra(q0.clone(), project_affine, project_cone, &budget, |x| {
            found = accept(sys, &candidate(x), opts.tol);
            found.is_some()
        });
        iterations += used;
        x = last;
        found = found.or_else(|| accept(sys, &candidate(&x), opts.tol));
        if found.is_some() {
            break;
        }
    }
    finish(sys, found, iterations, method, candidate(&x), affine_residual)
}

/// `1e-2, 1e-4, …` down to `eps` (always ending at `eps`).
fn margin_schedule(eps: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut m = 1e-2;
    while m > eps * 1.000001 {
        out.push(m);
        m *= 1e-2;
    }
    out.push(eps);
    out
}

fn search_lifted(sys: &DiscreteStateSpace, bal: &Balanced, opts: &SearchOptions) -> Result<SearchOutcome> {
    let n = sys.n();
    let m = linalg::svec_len(n);
    let g = dc_direction(&bal.sys)?;
    let a = bal.sys.a();
    let target_eq = vec_of(&bal.sys.c().transpose());
    let neq = target_eq.len();

    // Rows: [M 0; T −I] acting on [svec P; svec S].
    let mut kmat = DMatrix::zeros(neq + m, 2 * m);
    for k in 0..m {
        let mut e = DVector::zeros(m);
        e[k] = 1.0;
        let basis = linalg::smat(&e, n);
        kmat.view_mut((0, k), (neq, 1)).copy_from(&vec_of(&(&basis * &g)));
        let lyap = a.transpose() * &basis * a - &basis;
        kmat.view_mut((neq, k), (m, 1)).copy_from(&linalg::svec(&lyap));
        kmat[(neq + k, m + k)] = -1.0;
    }
    let mut rhs = DVector::zeros(neq + m);
    rhs.rows_mut(0, neq).copy_from(&target_eq);

    let eq_block = kmat.view((0, 0), (neq, m)).clone_owned();
    let p0 = linalg::pinv(&eq_block)? * &target_eq;
    let affine_residual = (&eq_block * &p0 - &target_eq).norm() / (1.0 + target_eq.norm());
    let method = SearchMethod::Lifted;
    if affine_residual > 1e-8 {
        return Ok(SearchOutcome::Stalled(InfeasibilityReport {
            iterations: 0,
            method,
            residuals: None,
            affine_residual,
            note: format!("equality constraint is inconsistent; {ADVISORY_NOTE}"),
        }));
    }
    let s0 = kmat.view((neq, 0), (m, m)) * &p0;
    let mut x0 = DVector::zeros(2 * m);
    x0.rows_mut(0, m).copy_from(&p0);
    x0.rows_mut(m, m).copy_from(&s0);

    let kpinv = linalg::pinv(&kmat)?;
    let margin = opts.eps * p0.norm().max(1.0);
    let project_affine = |x: &DVector<f64>| x - &kpinv * (&kmat * x - &rhs);
    let project_cone = |x: &DVector<f64>| {
        let p = linalg::clip_spectrum(&linalg::smat(&x.rows(0, m).clone_owned(), n), Some(margin), None);
        let s = linalg::clip_spectrum(&linalg::smat(&x.rows(m, m).clone_owned(), n), None, Some(0.0));
        let mut out = DVector::zeros(2 * m);
        out.rows_mut(0, m).copy_from(&linalg::svec(&p));
        out.rows_mut(m, m).copy_from(&linalg::svec(&s));
        out
    };
    let candidate = |x: &DVector<f64>| -> DMatrix<f64> {
        let y = project_affine(x);
        bal.unscale(&linalg::smat(&y.rows(0, m).clone_owned(), n))
    };

    let mut found: Option<NiCertificate> = None;
    let (x, iterations, _) = dykstra(x0, project_affine, project_cone, opts, |x| {
        found = accept(sys, &candidate(x), opts.tol);
        found.is_some()
    });
    let found = found.or_else(|| accept(sys, &candidate(&x), opts.tol));
    finish(sys, found, iterations, method, candidate(&x), affine_residual)
}

fn accept(sys: &DiscreteStateSpace, p: &DMatrix<f64>, tol: f64) -> Option<NiCertificate> {
    verify_candidate(sys, p, tol).ok()?.into_certificate()
}

fn finish(
    sys: &DiscreteStateSpace,
    found: Option<NiCertificate>,
    iterations: usize,
    method: SearchMethod,
    last: DMatrix<f64>,
    affine_residual: f64,
) -> Result<SearchOutcome> {
    Ok(match found {
        Some(certificate) => SearchOutcome::Found(FoundCertificate {
            certificate,
            iterations,
            method,
        }),
        None => SearchOutcome::Stalled(InfeasibilityReport {
            iterations,
            method,
            residuals: ni_residuals(sys, &last).ok(),
            affine_residual,
            note: ADVISORY_NOTE.to_string(),
        }),
    })
}

/// One step of the dissipation replay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DissipationRecord {
    /// `V(x[k+1]) − V(x[k])`
    pub storage_increment: f64,
    /// `u[k]ᵀ(y[k+1] − y[k])`
    pub supply: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DissipationTrace {
    pub records: Vec<DissipationRecord>,
    /// `max_k (storage_increment − supply)`, zero for an empty trace.
    pub worst_violation: f64,
    /// Largest `‖x[k]‖` seen, for scaling the slack.
    pub max_state_norm: f64,
}

/// Simulates the plant from `x0` under `inputs` and records both sides of the
/// dissipation inequality with `V(x) = ½ xᵀPx`.
pub fn check_dissipation_empirical(
    sys: &DiscreteStateSpace,
    p: &DMatrix<f64>,
    inputs: &[DVector<f64>],
    x0: &DVector<f64>,
) -> Result<DissipationTrace> {
    let n = sys.n();
    if p.nrows() != n || p.ncols() != n {
        return Err(Error::Dimension(format!("P must be {n}x{n}")));
    }
    if x0.len() != n {
        return Err(Error::Dimension(format!("x0 has length {}, expected {n}", x0.len())));
    }
    if let Some(u) = inputs.iter().find(|u| u.len() != sys.p()) {
        return Err(Error::Dimension(format!(
            "input of length {}, expected {}",
            u.len(),
            sys.p()
        )));
    }
    let storage = |x: &DVector<f64>| 0.5 * x.dot(&(p * x));
    let mut x = x0.clone();
    let mut records = Vec::with_capacity(inputs.len());
    let mut worst = f64::NEG_INFINITY;
    let mut max_state_norm = x.norm();
    for u in inputs {
        let x_next = sys.next_state(&x, u);
        let dy = sys.output(&x_next) - sys.output(&x);
        let rec = DissipationRecord {
            storage_increment: storage(&x_next) - storage(&x),
            supply: u.dot(&dy),
        };
        worst = worst.max(rec.storage_increment - rec.supply);
        records.push(rec);
        x = x_next;
        max_state_norm = max_state_norm.max(x.norm());
    }
    Ok(DissipationTrace {
        records,
        worst_violation: if worst.is_finite() { worst } else { 0.0 },
        max_state_norm,
    })
}

/// Outcome of the step-advanced NI structure test.
#[derive(Debug, Clone, PartialEq)]
pub struct SaniCheck {
    pub is_sani: bool,
    /// Least-squares solution of `H [A_c B_c] = [C_c D_c]`.
    pub h: DMatrix<f64>,
    pub structure_residual: f64,
    /// `(A_c, B_c, H)`, when it is a valid square realization.
    pub underlying: Option<DiscreteStateSpace>,
    pub ni: Option<SearchOutcome>,
    pub reason: Option<String>,
}

/// Tests whether a controller with feedthrough is the one-step advance of an NI
/// system: `C_c = H A_c`, `D_c = H B_c` for some `H`, with `(A_c, B_c, H)` NI.
pub fn verify_sani_structure(ctrl: &FeedthroughStateSpace, opts: &SearchOptions) -> Result<SaniCheck> {
    let n = ctrl.n();
    let p = ctrl.p();
    let mut ab = DMatrix::zeros(n, n + p);
    ab.view_mut((0, 0), (n, n)).copy_from(ctrl.a());
    ab.view_mut((0, n), (n, p)).copy_from(ctrl.b());
    let mut cd = DMatrix::zeros(p, n + p);
    cd.view_mut((0, 0), (p, n)).copy_from(ctrl.c());
    cd.view_mut((0, n), (p, p)).copy_from(ctrl.d());

    let h = &cd * linalg::pinv(&ab)?;
    let structure_residual = (&h * &ab - &cd).norm();
    let mut out = SaniCheck {
        is_sani: false,
        h: h.clone(),
        structure_residual,
        underlying: None,
        ni: None,
        reason: None,
    };
    if structure_residual > opts.tol * (1.0 + cd.norm()) {
        out.reason = Some(format!(
            "no H with C_c = H A_c and D_c = H B_c (residual {structure_residual:e})"
        ));
        return Ok(out);
    }
    let underlying = DiscreteStateSpace::new(ctrl.a().clone(), ctrl.b().clone(), h)?;
    if let Err(e) = underlying.i_minus_a() {
        out.reason = Some(e.to_string());
        out.underlying = Some(underlying);
        return Ok(out);
    }
    let ni = find_certificate(&underlying, opts)?;
    out.is_sani = ni.certificate().is_some();
    if !out.is_sani {
        out.reason = Some("underlying system has no NI certificate".into());
    }
    out.underlying = Some(underlying);
    out.ni = Some(ni);
    Ok(out)
}
