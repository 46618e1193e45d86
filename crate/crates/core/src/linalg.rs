//! Small dense linear-algebra helpers shared across the crate.
//!
//! Everything here works on `DMatrix<f64>`; the systems handled by this crate
//! are small (tens of states) so dense factorizations are used throughout.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Relative tolerance on the smallest singular value used for singularity tests.
pub const SINGULAR_RTOL: f64 = 1e-10;

pub(crate) fn require_square(name: &str, m: &DMatrix<f64>) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension(format!(
            "{name} must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(m.nrows())
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Largest absolute entry of `m - mᵀ`.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Rejects matrices that are not symmetric up to rounding.
pub fn require_symmetric(name: &str, m: &DMatrix<f64>) -> Result<()> {
    require_square(name, m)?;
    let asym = asymmetry(m);
    if asym > 1e-12 * (1.0 + m.amax()) {
        return Err(Error::Asymmetric {
            name: name.to_string(),
            asymmetry: asym,
        });
    }
    Ok(())
}

/// Eigenvalues of the symmetric part of `m`, ascending.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> DVector<f64> {
    if m.is_empty() {
        return DVector::zeros(0);
    }
    let mut v: Vec<f64> = symmetrize(m).symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(|a, b| a.total_cmp(b));
    DVector::from_vec(v)
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m).iter().copied().fold(f64::INFINITY, f64::min)
}

pub fn max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m)
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Rebuilds a symmetric matrix with its eigenvalues clamped into `[lo, hi]`.
pub fn clip_spectrum(m: &DMatrix<f64>, lo: Option<f64>, hi: Option<f64>) -> DMatrix<f64> {
    let eig = symmetrize(m).symmetric_eigen();
    let clipped = eig.eigenvalues.map(|l| {
        let l = lo.map_or(l, |lo| l.max(lo));
        hi.map_or(l, |hi| l.min(hi))
    });
    let v = &eig.eigenvectors;
    symmetrize(&(v * DMatrix::from_diagonal(&clipped) * v.transpose()))
}

/// NaN-filled when `m` has non-finite entries.
pub fn singular_values(m: &DMatrix<f64>) -> DVector<f64> {
    if m.is_empty() {
        return DVector::zeros(0);
    }
    if !m.iter().all(|v| v.is_finite()) {
        return DVector::from_element(m.nrows().min(m.ncols()), f64::NAN);
    }
    m.clone().svd(false, false).singular_values
}

/// Induced 2-norm.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    singular_values(m).iter().copied().fold(0.0, f64::max)
}

pub fn smallest_singular_value(m: &DMatrix<f64>) -> f64 {
    singular_values(m)
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// `σ_min / σ_max` after diagonal balancing (square inputs), so badly scaled but
/// well-posed matrices are not mistaken for singular ones.
pub fn singularity_ratio(m: &DMatrix<f64>) -> f64 {
    let sv = if m.is_square() {
        let d = balance(m);
        let scaled = DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] * d[j] / d[i]);
        singular_values(&scaled)
    } else {
        singular_values(m)
    };
    let hi = sv.iter().copied().fold(0.0, f64::max);
    let lo = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if hi == 0.0 {
        0.0
    } else {
        lo / hi
    }
}

/// `singularity_ratio(M) ≤ 1e-10`.
pub fn is_numerically_singular(m: &DMatrix<f64>) -> bool {
    singularity_ratio(m) <= SINGULAR_RTOL
}

pub fn eigenvalues(m: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    let n = require_square("matrix", m)?;
    if n == 0 {
        return Ok(Vec::new());
    }
    if !m.iter().all(|v| v.is_finite()) {
        return Err(Error::Numerical("non-finite matrix entry".into()));
    }
    Ok(m.complex_eigenvalues().iter().copied().collect())
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(m: &DMatrix<f64>) -> Result<f64> {
    if m.nrows() != m.ncols() {
        return Err(Error::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    Ok(eigenvalues(m)?.iter().map(|l| l.norm()).fold(0.0, f64::max))
}

pub fn rank(m: &DMatrix<f64>, rtol: f64) -> usize {
    let sv = singular_values(m);
    let hi = sv.iter().copied().fold(0.0, f64::max);
    if hi == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rtol * hi).count()
}

/// Moore-Penrose pseudo-inverse with a relative cut-off on the singular values.
pub fn pinv(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if m.is_empty() {
        return Ok(DMatrix::zeros(m.ncols(), m.nrows()));
    }
    if !m.iter().all(|v| v.is_finite()) {
        return Err(Error::Numerical("non-finite matrix entry".into()));
    }
    let svd = m.clone().svd(true, true);
    let hi = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let eps = hi * 1e-13 * (m.nrows().max(m.ncols()) as f64);
    Ok(svd
        .pseudo_inverse(eps)
        .unwrap_or_else(|_| DMatrix::zeros(m.ncols(), m.nrows())))
}

pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

/// Matrix exponential (scaling and squaring with Padé approximants).
pub fn expm(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.clone().exp()
}

/// Dimension of the space of symmetric `n × n` matrices.
pub fn svec_len(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Isometric half-vectorization: off-diagonal entries are weighted by √2 so that
/// Euclidean distance on vectors equals Frobenius distance on matrices.
pub fn svec(m: &DMatrix<f64>) -> DVector<f64> {
    let n = m.nrows();
    let mut out = Vec::with_capacity(svec_len(n));
    for j in 0..n {
        for i in j..n {
            if i == j {
                out.push(m[(i, i)]);
            } else {
                out.push(0.5 * (m[(i, j)] + m[(j, i)]) * std::f64::consts::SQRT_2);
            }
        }
    }
    DVector::from_vec(out)
}

pub fn smat(v: &DVector<f64>, n: usize) -> DMatrix<f64> {
    debug_assert_eq!(v.len(), svec_len(n));
    let mut m = DMatrix::zeros(n, n);
    let mut k = 0;
    for j in 0..n {
        for i in j..n {
            if i == j {
                m[(i, i)] = v[k];
            } else {
                let x = v[k] / std::f64::consts::SQRT_2;
                m[(i, j)] = x;
                m[(j, i)] = x;
            }
            k += 1;
        }
    }
    m
}

/// Diagonal similarity scaling `d` (powers of two) such that `diag(d)⁻¹ A diag(d)`
/// has comparable row and column norms.
pub fn balance(a: &DMatrix<f64>) -> DVector<f64> {
    const RADIX: f64 = 2.0;
    let n = a.nrows();
    let mut work = a.clone();
    let mut d = DVector::from_element(n, 1.0);
    for _ in 0..200 {
        let mut converged = true;
        for i in 0..n {
            let mut c = 0.0;
            let mut r = 0.0;
            for j in 0..n {
                if j != i {
                    c += work[(j, i)].abs();
                    r += work[(i, j)].abs();
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            let mut g = r / RADIX;
            while c < g {
                f *= RADIX;
                c *= RADIX * RADIX;
            }
            g = r * RADIX;
            while c > g {
                f /= RADIX;
                c /= RADIX * RADIX;
            }
            if (c + r) / f < 0.95 * s {
                converged = false;
                d[i] *= f;
                for j in 0..n {
                    work[(i, j)] /= f;
                    work[(j, i)] *= f;
                }
            }
        }
        if converged {
            break;
        }
    }
    d
}

/// Solver for the discrete Lyapunov equation `AᵀXA − X = −Q`, factored once
/// for repeated right-hand sides.
pub struct DiscreteLyapunov {
    n: usize,
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl DiscreteLyapunov {
    pub fn new(a: &DMatrix<f64>) -> Result<Self> {
        let n = require_square("A", a)?;
        let at = a.transpose();
        let op = DMatrix::identity(n * n, n * n) - kron(&at, &at);
        if is_numerically_singular(&op) {
            return Err(Error::Numerical(
                "Lyapunov operator is singular (A has reciprocal eigenvalue pairs)".into(),
            ));
        }
        Ok(Self { n, lu: op.lu() })
    }

    pub fn solve(&self, q: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.n;
        let rhs = DVector::from_column_slice(q.as_slice());
        let x = self
            .lu
            .solve(&rhs)
            .unwrap_or_else(|| DVector::zeros(n * n));
        symmetrize(&DMatrix::from_column_slice(n, n, x.as_slice()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
    }

    #[test]
    fn svec_round_trip_preserves_frobenius() {
        let m = DMatrix::from_row_slice(3, 3, &[2.0, -1.0, 0.5, -1.0, 3.0, 4.0, 0.5, 4.0, 1.0]);
        let v = svec(&m);
        assert_eq!(v.len(), 6);
        assert!(close(v.norm(), m.norm(), 1e-14));
        assert_eq!(smat(&v, 3), m);
    }

    #[test]
    fn clip_spectrum_bounds_eigenvalues() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let c = clip_spectrum(&m, Some(0.0), None);
        let e = sym_eigenvalues(&c);
        assert!(e[0].abs() < 1e-14);
        assert!(close(e[1], 3.0, 1e-14));
    }

    #[test]
    fn lyapunov_solution_satisfies_equation() {
        let a = DMatrix::from_row_slice(2, 2, &[0.5, 0.2, -0.1, 0.3]);
        let q = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.1, 2.0]);
        let x = DiscreteLyapunov::new(&a).unwrap().solve(&q);
        let res = a.transpose() * &x * &a - &x + &q;
        assert!(res.amax() < 1e-13);
    }

    #[test]
    fn balance_equalizes_modal_block() {
        let w = 2.0 * std::f64::consts::PI * 14_860.0;
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -w * w, -0.01 * w]);
        let d = balance(&a);
        let dinv = DMatrix::from_diagonal(&d.map(|x| 1.0 / x));
        let ab = &dinv * &a * DMatrix::from_diagonal(&d);
        let ratio = ab[(1, 0)].abs() / ab[(0, 1)].abs();
        assert!(ratio < 4.0 && ratio > 0.25, "ratio {ratio}");
    }

    #[test]
    fn singularity_ignores_diagonal_scaling() {
        // shape of I − A for a sampled 15 kHz mode
        let (w, ts) = (2.0 * std::f64::consts::PI * 14860.0, 8e-7);
        let m = DMatrix::from_row_slice(2, 2, &[0.0, -ts, w * w * ts, 0.01 * w * ts]);
        assert!(!is_numerically_singular(&m));
        let s = DMatrix::from_row_slice(2, 2, &[1e8, 2e8, 0.5, 1.0]);
        assert!(is_numerically_singular(&s));
        assert!(is_numerically_singular(&DMatrix::zeros(2, 2)));
    }
}
