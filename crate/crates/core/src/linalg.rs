//! Small dense complex helpers shared by the solvers.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;
pub type RMat = DMatrix<f64>;
pub type RVec = DVector<f64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Elementwise product `a ∘ b`.
pub fn hadamard(a: &CVec, b: &CVec) -> CVec {
    a.component_mul(b)
}

/// Elementwise product `a ∘ conj(b)`.
pub fn hadamard_conj(a: &CVec, b: &CVec) -> CVec {
    CVec::from_iterator(a.len(), a.iter().zip(b.iter()).map(|(x, y)| x * y.conj()))
}

/// `Diag(d) * m`, i.e. row `i` of `m` scaled by `d[i]`.
pub fn scale_rows(d: &CVec, m: &CMat) -> CMat {
    let mut out = m.clone();
    for (i, mut row) in out.row_iter_mut().enumerate() {
        row *= d[i];
    }
    out
}

pub fn conj_vec(v: &CVec) -> CVec {
    v.map(|z| z.conj())
}

pub fn select_columns(m: &CMat, cols: &[usize]) -> CMat {
    m.select_columns(cols.iter())
}

pub fn inf_norm(v: &CVec) -> f64 {
    v.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn is_finite_vec(v: &CVec) -> bool {
    v.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

pub fn is_finite_mat(m: &CMat) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Cholesky factor of a Hermitian positive definite matrix.
pub fn hpd_factor(m: CMat) -> Result<Cholesky<Complex64, Dyn>> {
    Cholesky::new(m).ok_or(Error::NotPositiveDefinite)
}

/// Solves `(m^H m + shift I) x = rhs`.
pub fn ridge_solve(m: &CMat, shift: f64, rhs: &CVec) -> Result<CVec> {
    let n = m.ncols();
    let mut gram = m.adjoint() * m;
    for i in 0..n {
        gram[(i, i)] += Complex64::new(shift, 0.0);
    }
    Ok(hpd_factor(gram)?.solve(rhs))
}

/// Least-squares solution of `m x ≈ rhs` for a full column rank `m`.
pub fn least_squares(m: &CMat, rhs: &CVec) -> Option<CVec> {
    if m.ncols() == 0 {
        return Some(CVec::zeros(0));
    }
    let qr = m.clone().qr();
    let q = qr.q();
    let r = qr.r();
    let qtb = q.adjoint() * rhs;
    r.solve_upper_triangular(&qtb)
}

/// Rotates `v` so that its first entry with modulus above `tiny` becomes
/// real and nonnegative.
pub fn gauge_first_nonzero(v: &mut CVec, tiny: f64) {
    if let Some(z) = v.iter().find(|z| z.norm() > tiny).copied() {
        let rot = z.conj() / z.norm();
        for x in v.iter_mut() {
            *x *= rot;
        }
    }
}

/// Global phase that best aligns `x` to `reference`, returned as the aligned copy.
pub fn align_phase(x: &CVec, reference: &CVec) -> CVec {
    let inner: Complex64 = x.iter().zip(reference.iter()).map(|(a, b)| a.conj() * b).sum();
    if inner.norm() == 0.0 {
        return x.clone();
    }
    x * (inner / inner.norm())
}

/// Stacks `(Re v, Im v)` into a real vector of twice the length.
pub fn to_real(v: &CVec) -> RVec {
    let n = v.len();
    RVec::from_fn(2 * n, |i, _| if i < n { v[i].re } else { v[i - n].im })
}

pub fn from_real(v: &RVec) -> CVec {
    let n = v.len() / 2;
    CVec::from_fn(n, |i, _| Complex64::new(v[i], v[i + n]))
}

/// Number of subsets of `{0..l}` with size in `1..=k`, saturating.
pub fn count_supports(l: usize, k: usize) -> u128 {
    let mut total: u128 = 0;
    let mut binom: u128 = 1;
    for size in 1..=k.min(l) {
        binom = binom.saturating_mul((l - size + 1) as u128) / size as u128;
        total = total.saturating_add(binom);
    }
    total
}

/// Visits every subset of `items` with size in `1..=k` in lexicographic order.
pub fn for_each_subset<F: FnMut(&[usize])>(items: &[usize], k: usize, mut f: F) {
    fn rec<F: FnMut(&[usize])>(items: &[usize], k: usize, start: usize, cur: &mut Vec<usize>, f: &mut F) {
        for i in start..items.len() {
            cur.push(items[i]);
            f(cur);
            if cur.len() < k {
                rec(items, k, i + 1, cur, f);
            }
            cur.pop();
        }
    }
    let mut cur = Vec::with_capacity(k);
    rec(items, k, 0, &mut cur, &mut f);
}
