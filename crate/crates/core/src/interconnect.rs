//! Positive-feedback interconnection of an NI plant with a discrete IRC and its
//! stability certificate.
//!
//! With `ũ[k] = y[k]` and `u[k] = ỹ[k]` the loop evolves as `ξ[k+1] = Â ξ[k]` with
//!
//! ```text
//! Â = [ A + BΓC   B + BΓD ]        Q = [  P   −Cᵀ ]
//!     [   ΓC       I + ΓD ]            [ −C   −D  ]
//! ```
//!
//! and `W(ξ) = ½ ξᵀQξ` is a Lyapunov function whenever `−2Γ⁻¹ ≺ D ≺ −G(1)`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::io::rows;
use crate::irc::{IrcParams, SaniController};
use crate::linalg;
use crate::ni_cert::{self, NiCertificate};
use crate::state_space::DiscreteStateSpace;

/// Default absolute tolerance on eigenvalue checks (scaled by `1 + ‖Q‖_F` for the
/// decrement test).
pub const DEFAULT_TOL: f64 = 1e-9;

fn require_ports(plant: &DiscreteStateSpace, p: usize) -> Result<()> {
    if plant.p() != p {
        return Err(Error::Dimension(format!(
            "plant has {} ports, controller has {p}",
            plant.p()
        )));
    }
    Ok(())
}

/// Closed-loop state matrix of the interconnection with `r = 0`.
pub fn close_loop(plant: &DiscreteStateSpace, ctrl: &SaniController) -> Result<DMatrix<f64>> {
    let r = ctrl.realization();
    require_ports(plant, r.p())?;
    let (n, nc) = (plant.n(), r.n());
    let (a, b, c) = (plant.a(), plant.b(), plant.c());
    let mut ahat = DMatrix::zeros(n + nc, n + nc);
    ahat.view_mut((0, 0), (n, n)).copy_from(&(a + b * r.d() * c));
    ahat.view_mut((0, n), (n, nc)).copy_from(&(b * r.c()));
    ahat.view_mut((n, 0), (nc, n)).copy_from(&(r.b() * c));
    ahat.view_mut((n, n), (nc, nc)).copy_from(r.a());
    Ok(ahat)
}

/// `Q = [[P, −Cᵀ], [−C, −D]]`.
pub fn lyapunov_matrix(plant: &DiscreteStateSpace, p: &DMatrix<f64>, params: &IrcParams) -> DMatrix<f64> {
    let (n, m) = (plant.n(), params.p());
    let mut q = DMatrix::zeros(n + m, n + m);
    q.view_mut((0, 0), (n, n)).copy_from(p);
    q.view_mut((0, n), (n, m)).copy_from(&(-plant.c().transpose()));
    q.view_mut((n, 0), (m, n)).copy_from(&(-plant.c()));
    q.view_mut((n, n), (m, m)).copy_from(&(-params.d()));
    q
}

/// One closed-loop stability hypothesis with its margin (positive = holds).
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Condition {
    pub name: String,
    pub margin: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ConditionsReport {
    /// `σ_min / σ_max` of the balanced `I − A`
    pub nonsingular_i_minus_a: Condition,
    /// `λ_min(D + 2Γ⁻¹)`
    pub d_above_minus_two_gamma_inv: Condition,
    /// `λ_min(−D − G(1))`
    pub d_below_minus_dc_gain: Condition,
    pub controllable: bool,
    pub observable: bool,
    pub warnings: Vec<String>,
}

impl ConditionsReport {
    pub fn hypotheses(&self) -> [&Condition; 3] {
        [
            &self.nonsingular_i_minus_a,
            &self.d_above_minus_two_gamma_inv,
            &self.d_below_minus_dc_gain,
        ]
    }

    pub fn all_hold(&self) -> bool {
        self.hypotheses().iter().all(|c| c.holds)
    }

    /// Plain-text table, one row per hypothesis.
    pub fn table(&self) -> String {
        let mut s = format!("{:<28} {:>14}  {}\n", "condition", "margin", "status");
        for c in self.hypotheses() {
            s.push_str(&format!(
                "{:<28} {:>14.6e}  {}\n",
                c.name,
                c.margin,
                if c.holds { "ok" } else { "VIOLATED" }
            ));
        }
        s.push_str(&format!(
            "{:<28} {:>14}  {}\n",
            "minimal realization",
            "-",
            if self.controllable && self.observable { "ok" } else { "warning" }
        ));
        s
    }
}

/// Kalman rank test with relative tolerance 1e-8.
pub fn minimality(plant: &DiscreteStateSpace) -> (bool, bool) {
    let n = plant.n();
    let p = plant.p();
    let mut ctrb = DMatrix::zeros(n, n * p);
    let mut block = plant.b().clone();
    for k in 0..n {
        ctrb.view_mut((0, k * p), (n, p)).copy_from(&block);
        block = plant.a() * block;
    }
    let mut obsv = DMatrix::zeros(n * p, n);
    let mut block = plant.c().clone();
    for k in 0..n {
        obsv.view_mut((k * p, 0), (p, n)).copy_from(&block);
        block *= plant.a();
    }
    (linalg::rank(&ctrb, 1e-8) == n, linalg::rank(&obsv, 1e-8) == n)
}

/// Evaluates the three hypotheses `det(I−A) ≠ 0`, `D ≻ −2Γ⁻¹`, `D ≺ −G(1)`.
pub fn conditions_report(plant: &DiscreteStateSpace, params: &IrcParams) -> Result<ConditionsReport> {
    require_ports(plant, params.p())?;
    let ima = DMatrix::identity(plant.n(), plant.n()) - plant.a();
    let sv_ratio = linalg::singularity_ratio(&ima);
    let nonsingular = Condition {
        name: "det(I - A) != 0".into(),
        margin: sv_ratio,
        holds: sv_ratio > linalg::SINGULAR_RTOL,
    };
    let admissible = params.admissibility_margin();
    let admissible_cond = Condition {
        name: "D > -2 Gamma^-1".into(),
        margin: admissible,
        holds: params.is_stabilizing(),
    };
    let dc_cond = match plant.dc_gain() {
        Ok(g1) => {
            let m = -params.d() - linalg::symmetrize(&g1);
            let margin = linalg::min_eigenvalue(&m);
            let scale = crate::irc::INEQ_RTOL * linalg::spectral_norm(&m).max(linalg::spectral_norm(params.d()));
            Condition {
                name: "D < -G(1)".into(),
                margin,
                holds: margin > scale,
            }
        }
        Err(_) => Condition {
            name: "D < -G(1)".into(),
            margin: f64::NAN,
            holds: false,
        },
    };
    let (controllable, observable) = minimality(plant);
    let mut warnings = Vec::new();
    if !controllable {
        warnings.push("plant realization is not controllable (rank test, advisory)".into());
    }
    if !observable {
        warnings.push("plant realization is not observable (rank test, advisory)".into());
    }
    Ok(ConditionsReport {
        nonsingular_i_minus_a: nonsingular,
        d_above_minus_two_gamma_inv: admissible_cond,
        d_below_minus_dc_gain: dc_cond,
        controllable,
        observable,
        warnings,
    })
}

/// Closed-loop stability certificate.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ClosedLoopCertificate {
    #[serde(rename = "A_hat", with = "rows")]
    pub a_hat: DMatrix<f64>,
    #[serde(rename = "Q", with = "rows")]
    pub q: DMatrix<f64>,
    #[serde(rename = "min_eig_Q")]
    pub min_eig_q: f64,
    /// `λ_min(−D − CP⁻¹Cᵀ)`, the Schur complement of `P` in `Q`.
    pub schur_complement_margin: f64,
    /// `λ_max(ÂᵀQÂ − Q)`
    pub max_eig_decrement: f64,
    pub decomposition_residual: Option<f64>,
    pub spectral_radius: f64,
    pub conditions_report: ConditionsReport,
    pub tol: f64,
    pub accepted: bool,
}

/// Certifies asymptotic stability of the loop formed by `plant` and the IRC with
/// `params`, using the plant's NI certificate for `Q`.
pub fn certify_closed_loop(
    plant: &DiscreteStateSpace,
    cert: &NiCertificate,
    params: &IrcParams,
    tol: f64,
) -> Result<ClosedLoopCertificate> {
    require_ports(plant, params.p())?;
    let verdict = ni_cert::verify_candidate(plant, cert.p(), cert.tol())?;
    if !verdict.is_accepted() {
        return Err(Error::Precondition(
            "the NI certificate does not certify this plant".into(),
        ));
    }
    let conditions = conditions_report(plant, params)?;
    let ctrl = crate::irc::build_irc(params);
    let a_hat = close_loop(plant, &ctrl)?;
    let p = cert.p();
    let q = lyapunov_matrix(plant, p, params);

    let p_inv = p
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("P is not numerically positive definite".into()))?
        .inverse();
    let schur = -params.d() - plant.c() * &p_inv * plant.c().transpose();
    let schur_complement_margin = linalg::min_eigenvalue(&schur);
    let min_eig_q = linalg::min_eigenvalue(&q);
    let decrement = a_hat.transpose() * &q * &a_hat - &q;
    let max_eig_decrement = linalg::max_eigenvalue(&decrement);
    let spectral_radius = linalg::spectral_radius(&a_hat)?;
    let decomposition_residual = decomposition_check(plant, p, params)?.residual;

    let q_scale = 1.0 + q.norm();
    let accepted = conditions.all_hold()
        && min_eig_q > 0.0
        && schur_complement_margin > 0.0
        && max_eig_decrement <= tol * q_scale
        && spectral_radius < 1.0;

    Ok(ClosedLoopCertificate {
        a_hat,
        q,
        min_eig_q,
        schur_complement_margin,
        max_eig_decrement,
        decomposition_residual,
        spectral_radius,
        conditions_report: conditions,
        tol,
        accepted,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecompositionCheck {
    /// Max-abs difference between `ÂᵀQÂ − Q` and the two-term form; `None` when
    /// `B = (I−A)P⁻¹Cᵀ` fails and the identity does not apply.
    pub residual: Option<f64>,
    /// `‖B − (I−A)P⁻¹Cᵀ‖_F / (1 + ‖B‖_F)`
    pub input_identity_residual: f64,
}

/// Relative tolerance on `B = (I−A)P⁻¹Cᵀ` below which the decomposition is checked.
pub const INPUT_IDENTITY_RTOL: f64 = 1e-8;

/// Compares `ÂᵀQÂ − Q` against
/// `L P⁻¹(AᵀPA − P)P⁻¹ Lᵀ − R (D + 2Γ⁻¹) Rᵀ` with
/// `L = [CᵀΓC − P; (I+DΓ)C]` and `R = [CᵀΓ; DΓ]`.
pub fn decomposition_check(
    plant: &DiscreteStateSpace,
    p: &DMatrix<f64>,
    params: &IrcParams,
) -> Result<DecompositionCheck> {
    require_ports(plant, params.p())?;
    let n = plant.n();
    let m = params.p();
    if p.nrows() != n || p.ncols() != n {
        return Err(Error::Dimension(format!("P must be {n}x{n}")));
    }
    let (a, b, c) = (plant.a(), plant.b(), plant.c());
    let (gamma, d) = (params.gamma(), params.d());
    let p_inv = p
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("P is singular".into()))?;
    let ima = DMatrix::identity(n, n) - a;
    let implied_b = &ima * &p_inv * c.transpose();
    let input_identity_residual = (b - implied_b).norm() / (1.0 + b.norm());
    if !(input_identity_residual <= INPUT_IDENTITY_RTOL) {
        return Ok(DecompositionCheck {
            residual: None,
            input_identity_residual,
        });
    }

    let ctrl = crate::irc::build_irc(params);
    let a_hat = close_loop(plant, &ctrl)?;
    let q = lyapunov_matrix(plant, p, params);
    let direct = a_hat.transpose() * &q * &a_hat - &q;

    let eye_m = DMatrix::identity(m, m);
    let mut l = DMatrix::zeros(n + m, n);
    l.view_mut((0, 0), (n, n)).copy_from(&(c.transpose() * gamma * c - p));
    l.view_mut((n, 0), (m, n)).copy_from(&((&eye_m + d * gamma) * c));
    let mut r = DMatrix::zeros(n + m, m);
    r.view_mut((0, 0), (n, m)).copy_from(&(c.transpose() * gamma));
    r.view_mut((n, 0), (m, m)).copy_from(&(d * gamma));
    let lyap = a.transpose() * p * a - p;
    let term1 = &l * &p_inv * lyap * &p_inv * l.transpose();
    let term2 = -(&r * params.admissibility_matrix() * r.transpose());
    let residual = (direct - term1 - term2).amax();
    Ok(DecompositionCheck {
        residual: Some(residual),
        input_identity_residual,
    })
}

/// `W[k] = ½ ξ[k]ᵀ Q ξ[k]` along the autonomous loop from `xi0 = [x0; x̃0]`.
/// Returns `steps + 1` values including the initial one.
pub fn lyapunov_decrement_trace(
    plant: &DiscreteStateSpace,
    p: &DMatrix<f64>,
    params: &IrcParams,
    xi0: &DVector<f64>,
    steps: usize,
) -> Result<Vec<f64>> {
    let ctrl = crate::irc::build_irc(params);
    let a_hat = close_loop(plant, &ctrl)?;
    if xi0.len() != a_hat.nrows() {
        return Err(Error::Dimension(format!(
            "initial state has length {}, loop has {} states",
            xi0.len(),
            a_hat.nrows()
        )));
    }
    if p.nrows() != plant.n() || p.ncols() != plant.n() {
        return Err(Error::Dimension(format!("P must be {0}x{0}", plant.n())));
    }
    let q = lyapunov_matrix(plant, p, params);
    Ok(w_trace(&a_hat, &q, xi0, steps))
}

pub(crate) fn w_trace(a_hat: &DMatrix<f64>, q: &DMatrix<f64>, xi0: &DVector<f64>, steps: usize) -> Vec<f64> {
    let mut xi = xi0.clone();
    let mut out = Vec::with_capacity(steps + 1);
    out.push(0.5 * xi.dot(&(q * &xi)));
    for _ in 0..steps {
        xi = a_hat * &xi;
        out.push(0.5 * xi.dot(&(q * &xi)));
    }
    out
}
