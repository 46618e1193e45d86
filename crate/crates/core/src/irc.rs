//! Integral resonant controller construction and parameter synthesis.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::rows;
use crate::linalg;
use crate::state_space::{ContinuousStateSpace, DiscreteStateSpace, FeedthroughStateSpace};

/// Relative tolerance for the matrix-inequality tests on `(Γ, D)`.
pub const INEQ_RTOL: f64 = 1e-10;

fn inv(m: &DMatrix<f64>, name: &str) -> Result<DMatrix<f64>> {
    m.clone()
        .try_inverse()
        .ok_or_else(|| Error::Numerical(format!("{name} is singular")))
}

/// The symmetric pair `(Γ, D)` with `Γ ≻ 0`, `D ≺ 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "IrcParamsFile", into = "IrcParamsFile")]
pub struct IrcParams {
    gamma: DMatrix<f64>,
    d: DMatrix<f64>,
}

#[derive(Serialize, Deserialize)]
struct IrcParamsFile {
    #[serde(rename = "Gamma", with = "rows")]
    gamma: DMatrix<f64>,
    #[serde(rename = "D", with = "rows")]
    d: DMatrix<f64>,
}

impl TryFrom<IrcParamsFile> for IrcParams {
    type Error = Error;
    fn try_from(f: IrcParamsFile) -> Result<Self> {
        IrcParams::new(f.gamma, f.d)
    }
}

impl From<IrcParams> for IrcParamsFile {
    fn from(p: IrcParams) -> Self {
        Self {
            gamma: p.gamma,
            d: p.d,
        }
    }
}

impl IrcParams {
    pub fn new(gamma: DMatrix<f64>, d: DMatrix<f64>) -> Result<Self> {
        let p = linalg::require_square("Gamma", &gamma)?;
        if p == 0 || d.nrows() != p || d.ncols() != p {
            return Err(Error::Dimension(format!(
                "Gamma is {p}x{p} but D is {}x{}",
                d.nrows(),
                d.ncols()
            )));
        }
        linalg::require_symmetric("Gamma", &gamma)?;
        linalg::require_symmetric("D", &d)?;
        let gamma = linalg::symmetrize(&gamma);
        let d = linalg::symmetrize(&d);
        let g_min = linalg::min_eigenvalue(&gamma);
        if !(g_min > INEQ_RTOL * linalg::spectral_norm(&gamma)) || g_min <= 0.0 {
            return Err(Error::Definiteness(format!(
                "Gamma must be positive definite (smallest eigenvalue {g_min:e})"
            )));
        }
        let d_max = linalg::max_eigenvalue(&d);
        if !(d_max < -INEQ_RTOL * linalg::spectral_norm(&d)) || d_max >= 0.0 {
            return Err(Error::Definiteness(format!(
                "D must be negative definite (largest eigenvalue {d_max:e})"
            )));
        }
        Ok(Self { gamma, d })
    }

    pub fn scalar(gamma: f64, d: f64) -> Result<Self> {
        Self::new(DMatrix::from_element(1, 1, gamma), DMatrix::from_element(1, 1, d))
    }

    pub fn gamma(&self) -> &DMatrix<f64> {
        &self.gamma
    }
    pub fn d(&self) -> &DMatrix<f64> {
        &self.d
    }
    pub fn p(&self) -> usize {
        self.gamma.nrows()
    }

    /// `D + 2Γ⁻¹`, positive semidefinite on the NI range of the controller core.
    pub fn admissibility_matrix(&self) -> DMatrix<f64> {
        &self.d + inv(&self.gamma, "Gamma").expect("Gamma is positive definite") * 2.0
    }

    /// `λ_min(D + 2Γ⁻¹)`.
    pub fn admissibility_margin(&self) -> f64 {
        linalg::min_eigenvalue(&self.admissibility_matrix())
    }

    fn admissibility_scale(&self) -> f64 {
        INEQ_RTOL * linalg::spectral_norm(&self.admissibility_matrix()).max(linalg::spectral_norm(&self.d))
    }

    /// `−2Γ⁻¹ ⪯ D`, boundary included.
    pub fn in_ni_range(&self) -> bool {
        self.admissibility_margin() >= -self.admissibility_scale()
    }

    /// `−2Γ⁻¹ ≺ D` strictly.
    pub fn is_stabilizing(&self) -> bool {
        self.admissibility_margin() > self.admissibility_scale()
    }
}

/// Continuous IRC `ẋ = ΓD x + Γ u`, `y = x`, i.e. `K(s) = (sI − ΓD)⁻¹Γ`.
pub fn continuous_irc(params: &IrcParams) -> ContinuousStateSpace {
    let p = params.p();
    ContinuousStateSpace::new(
        params.gamma() * params.d(),
        params.gamma().clone(),
        DMatrix::identity(p, p),
        DMatrix::zeros(p, p),
    )
    .expect("IRC dimensions are consistent")
}

/// NI core of the discrete IRC: `x[k+1] = (I+ΓD) x[k] + Γ u[k]`, `y[k] = x[k]`,
/// with transfer matrix `K(z) = [zI − (I+ΓD)]⁻¹Γ`.
pub fn discrete_k(params: &IrcParams) -> DiscreteStateSpace {
    let p = params.p();
    DiscreteStateSpace::new(
        DMatrix::identity(p, p) + params.gamma() * params.d(),
        params.gamma().clone(),
        DMatrix::identity(p, p),
    )
    .expect("IRC dimensions are consistent")
}

/// Step-advanced IRC: the output of [`discrete_k`] taken one step ahead,
/// `y[k] = (I+ΓD) x[k] + Γ u[k]`, so `F(z) = z[zI − (I+ΓD)]⁻¹Γ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SaniController {
    realization: FeedthroughStateSpace,
    params: IrcParams,
    warnings: Vec<String>,
}

impl SaniController {
    pub fn realization(&self) -> &FeedthroughStateSpace {
        &self.realization
    }
    pub fn params(&self) -> &IrcParams {
        &self.params
    }
    /// Same as `params().is_stabilizing()`.
    pub fn is_stabilizing(&self) -> bool {
        self.params.is_stabilizing()
    }
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }
    pub fn p(&self) -> usize {
        self.params.p()
    }
}

/// Builds the discrete IRC. Parameters outside `−2Γ⁻¹ ⪯ D` still produce a
/// controller, carrying a warning and a false stabilizing flag.
pub fn build_irc(params: &IrcParams) -> SaniController {
    let core = discrete_k(params);
    let realization = FeedthroughStateSpace::new(
        core.a().clone(),
        core.b().clone(),
        core.a().clone(),
        core.b().clone(),
    )
    .expect("IRC dimensions are consistent");
    let mut warnings = Vec::new();
    if !params.in_ni_range() {
        warnings.push(format!(
            "D + 2Γ⁻¹ is not positive semidefinite (λ_min = {:e}); the controller core is not certified NI",
            params.admissibility_margin()
        ));
    } else if !params.is_stabilizing() {
        warnings.push("D = −2Γ⁻¹ on the boundary: NI but not stabilizing".to_string());
    }
    SaniController {
        realization,
        params: params.clone(),
        warnings,
    }
}

/// Synthesis margins: `D = −(G(1) + delta·I)`, `Γ = beta·(−2D⁻¹)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthesisOptions {
    pub delta: f64,
    pub beta: f64,
}

impl SynthesisOptions {
    /// `delta = 2·λ_max(G(1))`, `beta = 0.5`.
    pub fn defaults_for(g1: &DMatrix<f64>) -> Self {
        Self {
            delta: 2.0 * linalg::max_eigenvalue(g1),
            beta: 0.5,
        }
    }
}

/// Picks `(Γ, D)` with `−2Γ⁻¹ ≺ D ≺ −G(1)` strictly.
pub fn synthesize_params(g1: &DMatrix<f64>, opts: SynthesisOptions) -> Result<IrcParams> {
    let p = linalg::require_square("G(1)", g1)?;
    if !g1.iter().all(|v| v.is_finite()) {
        return Err(Error::Numerical("G(1) has non-finite entries".into()));
    }
    linalg::require_symmetric("G(1)", g1).map_err(|_| {
        Error::Definiteness(
            "G(1) must be symmetric positive definite, as it is for any NI plant (G(1) = C P⁻¹ Cᵀ)".into(),
        )
    })?;
    let g_min = linalg::min_eigenvalue(g1);
    if !(g_min > 0.0) {
        return Err(Error::Definiteness(format!(
            "G(1) must be positive definite, as it is for any NI plant (G(1) = C P⁻¹ Cᵀ); smallest eigenvalue is {g_min:e}"
        )));
    }
    if !(opts.delta.is_finite() && opts.delta > 0.0) {
        return Err(Error::InvalidInput(format!("delta must be positive, got {}", opts.delta)));
    }
    if !(opts.beta > 0.0 && opts.beta < 1.0) {
        return Err(Error::InvalidInput(format!("beta must lie in (0, 1), got {}", opts.beta)));
    }
    let d = -(linalg::symmetrize(g1) + DMatrix::identity(p, p) * opts.delta);
    let gamma = linalg::symmetrize(&(inv(&d, "D")? * (-2.0 * opts.beta)));
    IrcParams::new(gamma, d)
}
