#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use ni_irc::DiscreteStateSpace;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_matrix(rng: &mut impl Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
}

pub fn uniform_vector(rng: &mut impl Rng, n: usize, amp: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-amp..amp))
}

/// Symmetric positive definite with eigenvalues in roughly `[floor, floor + n]`.
pub fn random_spd(rng: &mut impl Rng, n: usize, floor: f64) -> DMatrix<f64> {
    let m = uniform_matrix(rng, n, n);
    &m * m.transpose() + DMatrix::identity(n, n) * floor
}

/// Symmetric square root via eigen-decomposition (test-side oracle, independent
/// of the library's linear algebra helpers).
pub fn sqrtm_spd(p: &DMatrix<f64>) -> DMatrix<f64> {
    let e = p.clone().symmetric_eigen();
    let s = e.eigenvalues.map(f64::sqrt);
    &e.eigenvectors * DMatrix::from_diagonal(&s) * e.eigenvectors.transpose()
}

/// An NI plant with a known certificate: `A = P^{-1/2} K P^{1/2}` with `‖K‖₂ = r < 1`
/// (so `AᵀPA ⪯ P`), random `B`, and `C = Bᵀ(I−A)⁻ᵀP`. Returns the plant and `P`.
pub fn random_ni_plant(rng: &mut impl Rng, n: usize, p: usize) -> (DiscreteStateSpace, DMatrix<f64>) {
    let pm = random_spd(rng, n, 0.2);
    let half = sqrtm_spd(&pm);
    let half_inv = half.clone().try_inverse().unwrap();
    let k = uniform_matrix(rng, n, n);
    let r = rng.random_range(0.3..0.95);
    let k = &k * (r / k.clone().svd(false, false).singular_values.max());
    let a = &half_inv * k * &half;
    let b = uniform_matrix(rng, n, p);
    let ima_inv = (DMatrix::identity(n, n) - &a).try_inverse().unwrap();
    let c = b.transpose() * ima_inv.transpose() * &pm;
    (DiscreteStateSpace::new(a, b, c).unwrap(), pm)
}

/// Eigenvalues of a 2×2 matrix from the quadratic formula; returns the larger
/// modulus.
pub fn spectral_radius_2x2(m: &DMatrix<f64>) -> f64 {
    let tr = m[(0, 0)] + m[(1, 1)];
    let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    let disc = tr * tr / 4.0 - det;
    if disc >= 0.0 {
        let s = disc.sqrt();
        (tr / 2.0 + s).abs().max((tr / 2.0 - s).abs())
    } else {
        det.sqrt()
    }
}

/// Truncated Taylor series `Σ_{k<terms} M^k / k!`.
pub fn expm_taylor(m: &DMatrix<f64>, terms: usize) -> DMatrix<f64> {
    let n = m.nrows();
    let mut sum = DMatrix::identity(n, n);
    let mut term = DMatrix::identity(n, n);
    for k in 1..terms {
        term = &term * m / k as f64;
        sum += &term;
    }
    sum
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax()
}
