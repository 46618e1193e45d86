//! State-space realizations and their basic queries.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::rows;
use crate::linalg;

/// Discrete-time plant `x[k+1] = A x[k] + B u[k]`, `y[k] = C x[k]` with square
/// `p × p` transfer matrix and no feedthrough.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteStateSpace {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    sample_period: Option<f64>,
}

fn check_abc(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<(usize, usize)> {
    let n = linalg::require_square("A", a)?;
    if n == 0 {
        return Err(Error::Dimension("state dimension must be at least 1".into()));
    }
    if b.nrows() != n {
        return Err(Error::Dimension(format!("B has {} rows, A is {n}x{n}", b.nrows())));
    }
    let p = b.ncols();
    if p == 0 {
        return Err(Error::Dimension("port dimension must be at least 1".into()));
    }
    if c.ncols() != n {
        return Err(Error::Dimension(format!("C has {} columns, A is {n}x{n}", c.ncols())));
    }
    if c.nrows() != p {
        return Err(Error::Dimension(format!(
            "transfer matrix must be square: C has {} rows but B has {p} columns",
            c.nrows()
        )));
    }
    for (name, m) in [("A", a), ("B", b), ("C", c)] {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("{name} contains non-finite entries")));
        }
    }
    Ok((n, p))
}

fn check_period(ts: f64) -> Result<f64> {
    if ts.is_finite() && ts > 0.0 {
        Ok(ts)
    } else {
        Err(Error::InvalidInput(format!("sample period must be positive, got {ts}")))
    }
}

/// Solves `(zI − A) X = B` and returns `C X`, rejecting `z` on the spectrum of `A`.
fn resolvent_product(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    z: Complex64,
) -> Result<DMatrix<Complex64>> {
    // evaluate on the balanced realization; the transfer matrix is unchanged
    let n = a.nrows();
    let s = linalg::balance(a);
    let zi_a = DMatrix::from_fn(n, n, |i, j| {
        let d = if i == j { z } else { Complex64::new(0.0, 0.0) };
        d - a[(i, j)] * s[j] / s[i]
    });
    if !zi_a.iter().all(|v| v.is_finite()) {
        return Err(Error::Numerical(format!("non-finite resolvent at z = {z}")));
    }
    let sv = zi_a.clone().svd(false, false).singular_values;
    let hi = sv.iter().copied().fold(0.0, f64::max);
    let lo = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if hi == 0.0 || lo <= linalg::SINGULAR_RTOL * hi {
        return Err(Error::PoleEvaluation { z });
    }
    let bc = DMatrix::from_fn(n, b.ncols(), |i, j| Complex64::new(b[(i, j)] / s[i], 0.0));
    let x = zi_a
        .lu()
        .solve(&bc)
        .ok_or(Error::PoleEvaluation { z })?;
    let cc = DMatrix::from_fn(c.nrows(), n, |i, j| Complex64::new(c[(i, j)] * s[j], 0.0));
    Ok(cc * x)
}

fn closest_to_one(a: &DMatrix<f64>) -> Complex64 {
    linalg::eigenvalues(a)
        .unwrap_or_default()
        .into_iter()
        .min_by(|x, y| (x - 1.0).norm().total_cmp(&(y - 1.0).norm()))
        .unwrap_or(Complex64::new(1.0, 0.0))
}

impl DiscreteStateSpace {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>) -> Result<Self> {
        check_abc(&a, &b, &c)?;
        Ok(Self {
            a,
            b,
            c,
            sample_period: None,
        })
    }

    pub fn with_sample_period(mut self, ts: f64) -> Result<Self> {
        self.sample_period = Some(check_period(ts)?);
        Ok(self)
    }

    /// Scalar convenience constructor.
    pub fn scalar(a: f64, b: f64, c: f64) -> Self {
        Self::new(
            DMatrix::from_element(1, 1, a),
            DMatrix::from_element(1, 1, b),
            DMatrix::from_element(1, 1, c),
        )
        .expect("scalar system is always consistent")
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }
    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }
    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }
    pub fn sample_period(&self) -> Option<f64> {
        self.sample_period
    }
    /// State dimension.
    pub fn n(&self) -> usize {
        self.a.nrows()
    }
    /// Port dimension.
    pub fn p(&self) -> usize {
        self.b.ncols()
    }

    /// `I − A`, or an error naming the eigenvalue that makes it singular.
    pub fn i_minus_a(&self) -> Result<DMatrix<f64>> {
        let m = DMatrix::identity(self.n(), self.n()) - &self.a;
        if linalg::is_numerically_singular(&m) {
            return Err(Error::UnitEigenvalue {
                eigenvalue: closest_to_one(&self.a),
            });
        }
        Ok(m)
    }

    /// `G(1) = C (I − A)⁻¹ B`.
    pub fn dc_gain(&self) -> Result<DMatrix<f64>> {
        let ima = self.i_minus_a()?;
        let x = ima.lu().solve(&self.b).ok_or(Error::UnitEigenvalue {
            eigenvalue: closest_to_one(&self.a),
        })?;
        Ok(&self.c * x)
    }

    /// `G(z) = C (zI − A)⁻¹ B`.
    pub fn eval_transfer(&self, z: Complex64) -> Result<DMatrix<Complex64>> {
        resolvent_product(&self.a, &self.b, &self.c, z)
    }

    /// Evaluates `G(e^{jωTs})` for `ω` in rad/s. Requires a sample period.
    pub fn eval_at_frequency(&self, omega: f64) -> Result<TransferEval> {
        let ts = self.sample_period.ok_or_else(|| {
            Error::InvalidInput("frequency evaluation needs a sample period".into())
        })?;
        let z = Complex64::from_polar(1.0, omega * ts);
        Ok(TransferEval {
            frequency: omega,
            value: self.eval_transfer(z)?,
        })
    }

    pub fn next_state(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.b * u
    }

    pub fn output(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.c * x
    }

    pub fn to_model(&self) -> ModelFile {
        ModelFile {
            n: self.n(),
            p: self.p(),
            a: self.a.clone(),
            b: self.b.clone(),
            c: self.c.clone(),
            sample_period: self.sample_period,
        }
    }

    pub fn from_model(model: ModelFile) -> Result<Self> {
        let sys = Self::new(model.a, model.b, model.c)?;
        if sys.n() != model.n || sys.p() != model.p {
            return Err(Error::Dimension(format!(
                "declared n={}, p={} but matrices give n={}, p={}",
                model.n,
                model.p,
                sys.n(),
                sys.p()
            )));
        }
        match model.sample_period {
            Some(ts) => sys.with_sample_period(ts),
            None => Ok(sys),
        }
    }
}

/// One sample of a discrete transfer matrix on the unit circle.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferEval {
    /// rad/s
    pub frequency: f64,
    pub value: DMatrix<Complex64>,
}

/// JSON interchange form of a discrete plant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub n: usize,
    pub p: usize,
    #[serde(rename = "A", with = "rows")]
    pub a: DMatrix<f64>,
    #[serde(rename = "B", with = "rows")]
    pub b: DMatrix<f64>,
    #[serde(rename = "C", with = "rows")]
    pub c: DMatrix<f64>,
    #[serde(default)]
    pub sample_period: Option<f64>,
}

/// Discrete system with feedthrough, `y[k] = C x[k] + D u[k]`; the controller side
/// of the loop.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedthroughStateSpace {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    d: DMatrix<f64>,
}

impl FeedthroughStateSpace {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>, d: DMatrix<f64>) -> Result<Self> {
        let (_, p) = check_abc(&a, &b, &c)?;
        if d.nrows() != p || d.ncols() != p {
            return Err(Error::Dimension(format!(
                "feedthrough must be {p}x{p}, got {}x{}",
                d.nrows(),
                d.ncols()
            )));
        }
        Ok(Self { a, b, c, d })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }
    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }
    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }
    pub fn d(&self) -> &DMatrix<f64> {
        &self.d
    }
    pub fn n(&self) -> usize {
        self.a.nrows()
    }
    pub fn p(&self) -> usize {
        self.b.ncols()
    }

    pub fn eval_transfer(&self, z: Complex64) -> Result<DMatrix<Complex64>> {
        Ok(resolvent_product(&self.a, &self.b, &self.c, z)? + self.d.map(|v| Complex64::new(v, 0.0)))
    }

    pub fn next_state(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.b * u
    }

    pub fn output(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.c * x + &self.d * u
    }
}

/// Continuous-time realization `ẋ = A x + B u`, `y = C x + D u`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousStateSpace {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    d: DMatrix<f64>,
}

impl ContinuousStateSpace {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>, d: DMatrix<f64>) -> Result<Self> {
        let (_, p) = check_abc(&a, &b, &c)?;
        if d.nrows() != p || d.ncols() != p {
            return Err(Error::Dimension(format!(
                "D must be {p}x{p}, got {}x{}",
                d.nrows(),
                d.ncols()
            )));
        }
        Ok(Self { a, b, c, d })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }
    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }
    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }
    pub fn d(&self) -> &DMatrix<f64> {
        &self.d
    }
    pub fn n(&self) -> usize {
        self.a.nrows()
    }
    pub fn p(&self) -> usize {
        self.b.ncols()
    }

    /// `G(0) = D − C A⁻¹ B`.
    pub fn dc_gain(&self) -> Result<DMatrix<f64>> {
        if linalg::is_numerically_singular(&self.a) {
            return Err(Error::Precondition(
                "A is singular, continuous DC gain is undefined".into(),
            ));
        }
        let x = self
            .a
            .clone()
            .lu()
            .solve(&self.b)
            .ok_or_else(|| Error::Numerical("LU solve failed".into()))?;
        Ok(&self.d - &self.c * x)
    }

    /// `G(s) = C (sI − A)⁻¹ B + D`.
    pub fn eval_transfer(&self, s: Complex64) -> Result<DMatrix<Complex64>> {
        Ok(resolvent_product(&self.a, &self.b, &self.c, s)? + self.d.map(|v| Complex64::new(v, 0.0)))
    }
}

/// Largest eigenvalue modulus of a square matrix.
pub fn spectral_radius(m: &DMatrix<f64>) -> Result<f64> {
    linalg::spectral_radius(m)
}
