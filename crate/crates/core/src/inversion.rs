//! Jensen-Nenciu inversion of an analytic family A(z) = A0 + z A1(z) whose
//! self-adjoint A0 has a kernel. All subspace algebra runs in frame coordinates.

use crate::error::{Result, ScopeError};
use crate::linalg::{compensated_matmul, hermitian_eig, identity, inverse, norm1, singular_values, CMat};
use faer::{Mat, Scale};
use num_complex::Complex64 as C64;
use serde::Serialize;

/// Conditioning limit beyond which an inverse is refused.
pub const MAX_CONDITION: f64 = 1e12;

/// Orthogonal projection stored through an orthonormal frame.
#[derive(Debug, Clone)]
pub struct Projection {
    pub frame: CMat,
    /// The frame spans an exact kernel of the family's A0 (after deflation), so A0 F is
    /// taken to be zero rather than evaluated from rounded entries.
    pub exact: bool,
}

impl Projection {
    pub fn empty(n: usize) -> Self {
        Self { frame: Mat::zeros(n, 0), exact: false }
    }

    pub fn from_frame(frame: CMat) -> Self {
        Self { frame, exact: false }
    }

    pub fn dim(&self) -> usize {
        self.frame.ncols()
    }

    pub fn ambient(&self) -> usize {
        self.frame.nrows()
    }

    /// P = F F*.
    pub fn matrix(&self) -> CMat {
        &self.frame * self.frame.adjoint()
    }

    /// Largest deviation of F*F from the identity.
    pub fn orthonormality_defect(&self) -> f64 {
        crate::linalg::max_abs(&(self.frame.adjoint() * &self.frame - identity(self.dim())))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Margins {
    /// Largest |eigenvalue| kept in the kernel (0 when none).
    pub kept: f64,
    /// Smallest |eigenvalue| discarded (infinity when none).
    pub discarded: f64,
}

#[derive(Debug, Clone)]
pub struct KernelProjection {
    pub projection: Projection,
    pub margins: Margins,
    /// Eigenvalues of the kept directions, in frame order.
    pub kept_eigenvalues: Vec<f64>,
}

/// Orthogonal projection onto eigenvectors of a Hermitian matrix with |mu| < eps_rank.
pub fn kernel_projection(a0: &CMat, eps_rank: f64, gap_factor: f64) -> Result<KernelProjection> {
    let n = a0.nrows();
    if n == 0 {
        return Ok(KernelProjection { projection: Projection::empty(0), margins: Margins { kept: 0.0, discarded: f64::INFINITY }, kept_eigenvalues: vec![] });
    }
    let (vals, vecs) = hermitian_eig(a0);
    let mut kept = Vec::new();
    let mut margins = Margins { kept: 0.0, discarded: f64::INFINITY };
    for (k, &mu) in vals.iter().enumerate() {
        let m = mu.abs();
        if m < eps_rank {
            kept.push(k);
            margins.kept = margins.kept.max(m);
        } else {
            if m < gap_factor * eps_rank {
                return Err(ScopeError::GapAmbiguity { value: mu, eps: eps_rank, gap_edge: gap_factor * eps_rank });
            }
            margins.discarded = margins.discarded.min(m);
        }
    }
    let frame = Mat::from_fn(n, kept.len(), |i, j| vecs[(i, kept[j])]);
    Ok(KernelProjection { projection: Projection { frame, exact: false }, margins, kept_eigenvalues: kept.iter().map(|&k| vals[k]).collect() })
}

/// A family A(z) = A0 + z A1(z) on a fixed finite dimension, for real z.
pub trait OperatorFamily: Sync {
    fn dim(&self) -> usize;
    fn a0(&self) -> &CMat;
    fn a1(&self, z: f64) -> CMat;
    fn at(&self, z: f64) -> CMat {
        self.a0() + self.a1(z) * Scale(C64::new(z, 0.0))
    }
}

/// A plain pair of matrices with A1(z) = B + z C, handy for tests and demos.
#[derive(Debug, Clone)]
pub struct LinearFamily {
    pub a0: CMat,
    pub b: CMat,
    pub c: CMat,
}

impl OperatorFamily for LinearFamily {
    fn dim(&self) -> usize {
        self.a0.nrows()
    }
    fn a0(&self) -> &CMat {
        &self.a0
    }
    fn a1(&self, z: f64) -> CMat {
        &self.b + &self.c * Scale(C64::new(z, 0.0))
    }
}

/// LU inverse that refuses when the 1-norm condition number reaches MAX_CONDITION.
pub fn checked_inverse(m: &CMat) -> Result<CMat> {
    let inv = inverse(m);
    let cond = norm1(m) * norm1(&inv);
    if !(cond < MAX_CONDITION) {
        return Err(ScopeError::NearSingular { cond });
    }
    Ok(inv)
}

/// Everything the inversion formula needs at one z.
#[derive(Debug, Clone)]
pub struct Reduction {
    pub z: f64,
    /// (A(z) + S)^{-1}.
    pub gamma: CMat,
    /// Gamma F.
    pub gamma_f: CMat,
    /// F* Gamma.
    pub f_gamma: CMat,
    /// B(z) in frame coordinates.
    pub b: CMat,
    pub b_inv: CMat,
}

impl Reduction {
    /// A(z)^{-1} = Gamma + z^{-1} Gamma F B^{-1} F* Gamma.
    pub fn inverse(&self) -> CMat {
        if self.b.nrows() == 0 {
            return self.gamma.clone();
        }
        &self.gamma + &self.gamma_f * &self.b_inv * &self.f_gamma * Scale(C64::new(1.0 / self.z, 0.0))
    }
}

/// The pieces of the reduction before B(z) is inverted.
#[derive(Debug, Clone)]
pub struct Schur {
    pub gamma: CMat,
    pub gamma_f: CMat,
    pub f_gamma: CMat,
    pub b: CMat,
    /// 1-norm of A1(z), the natural scale for B.
    pub a1_norm: f64,
}

/// Frame-coordinate B(z) = (S - S (A+S)^{-1} S)/z, evaluated without cancellation.
///
/// With X = Gamma F one has I - F* X = F* A(z) X, and F* A0 is formed with a
/// compensated product so the O(kernel residual / z) piece keeps its digits.
pub fn schur<F: OperatorFamily + ?Sized>(family: &F, s: &Projection, z: f64) -> Result<Schur> {
    if z == 0.0 || !z.is_finite() {
        return Err(ScopeError::Config(format!("reduction needs a nonzero finite z, got {z}")));
    }
    let frame = &s.frame;
    let a1 = family.a1(z);
    let az = family.a0() + &a1 * Scale(C64::new(z, 0.0));
    let gamma = checked_inverse(&(&az + frame * frame.adjoint()))?;
    let gamma_f = &gamma * frame;
    let f_gamma = frame.adjoint() * &gamma;
    if s.dim() == 0 {
        return Ok(Schur { gamma, gamma_f, f_gamma, b: Mat::zeros(0, 0), a1_norm: norm1(&a1) });
    }
    let mut b = frame.adjoint() * &a1 * &gamma_f;
    if !s.exact {
        // F* A0 = (A0 F)* for self-adjoint A0
        let a0f = compensated_matmul(family.a0(), frame);
        b += a0f.adjoint() * &gamma_f * Scale(C64::new(1.0 / z, 0.0));
    }
    Ok(Schur { gamma, gamma_f, f_gamma, b, a1_norm: norm1(&a1) })
}

pub fn reduce<F: OperatorFamily + ?Sized>(family: &F, s: &Projection, z: f64) -> Result<Reduction> {
    let Schur { gamma, gamma_f, f_gamma, b, a1_norm } = schur(family, s, z)?;
    if s.dim() == 0 {
        return Ok(Reduction { z, gamma, gamma_f, f_gamma, b, b_inv: Mat::zeros(0, 0) });
    }
    // B is judged against the size of A1, since B -> S A1(0) S as z -> 0
    let sv = singular_values(&b);
    let smallest = *sv.last().unwrap();
    if !(smallest * MAX_CONDITION > sv[0]) || !(smallest * MAX_CONDITION > a1_norm) {
        return Err(ScopeError::BNotInvertible);
    }
    let b_inv = inverse(&b);
    Ok(Reduction { z, gamma, gamma_f, f_gamma, b, b_inv })
}

pub fn b_operator<F: OperatorFamily + ?Sized>(family: &F, s: &Projection, z: f64) -> Result<CMat> {
    if s.dim() == 0 {
        return Err(ScopeError::Config("B(z) needs a nontrivial projection".into()));
    }
    Ok(reduce(family, s, z)?.b)
}

pub fn singular_inverse<F: OperatorFamily + ?Sized>(family: &F, s: &Projection, z: f64) -> Result<CMat> {
    Ok(reduce(family, s, z)?.inverse())
}

/// D(z) = z (S + S A(z)^{-1} S) in frame coordinates; the inverse of B(z) on range(S).
pub fn d_operator<F: OperatorFamily + ?Sized>(family: &F, s: &Projection, z: f64) -> Result<CMat> {
    let t = singular_inverse(family, s, z)?;
    let k = s.dim();
    Ok((identity(k) + s.frame.adjoint() * t * &s.frame) * Scale(C64::new(z, 0.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{max_abs, op_norm};

    fn c(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    // Hermitian a0 with an exact two-dimensional kernel, A1(z) = B + zC.
    fn family() -> LinearFamily {
        let q = crate::linalg::orthonormalize(&Mat::from_fn(6, 6, |i, j| C64::new(((3 * i + 5 * j) % 7) as f64 - 3.0 + if i == j { 4.0 } else { 0.0 }, 0.0)));
        let d = [0.0, 0.0, 1.5, -2.0, 0.7, 3.0];
        let a0 = Mat::from_fn(6, 6, |i, j| (0..6).map(|k| q[(i, k)] * c(d[k]) * q[(j, k)].conj()).sum::<C64>());
        let b = Mat::from_fn(6, 6, |i, j| C64::new(1.0 / (1.0 + (i + j) as f64), 0.3 * (i as f64 - j as f64)) + if i == j { c(1.0) } else { c(0.0) });
        let cc = Mat::from_fn(6, 6, |i, j| C64::new(0.1 * ((i * j) % 3) as f64, 0.05));
        LinearFamily { a0, b, c: cc }
    }

    #[test]
    fn kernel_projection_examples() {
        let a = Mat::from_fn(3, 3, |i, j| if i == j { c([2.0, -1.0, 1e-14][i]) } else { c(0.0) });
        let k = kernel_projection(&a, 1e-8, 100.0).unwrap();
        assert_eq!(k.projection.dim(), 1);
        assert!((k.projection.frame[(2, 0)].norm() - 1.0).abs() < 1e-15);
        assert_eq!(k.margins.discarded, 1.0);
        let amb = Mat::from_fn(2, 2, |i, j| if i == j { c([1.0, 1e-7][i]) } else { c(0.0) });
        assert!(matches!(kernel_projection(&amb, 1e-8, 100.0), Err(ScopeError::GapAmbiguity { .. })));
    }

    #[test]
    fn projection_is_idempotent() {
        let f = family();
        let k = kernel_projection(&f.a0, 1e-9, 100.0).unwrap().projection;
        assert_eq!(k.dim(), 2);
        let p = k.matrix();
        assert!(max_abs(&(&p * &p - &p)) < 1e-12);
        assert!(crate::linalg::hermitian_defect(&p) < 1e-12);
        assert!(k.orthonormality_defect() < 1e-12);
    }

    #[test]
    fn singular_inverse_is_two_sided() {
        let f = family();
        let s = kernel_projection(&f.a0, 1e-9, 100.0).unwrap().projection;
        for z in [1e-2, 1e-4, 1e-6] {
            let t = singular_inverse(&f, &s, z).unwrap();
            let a = f.at(z);
            let scale = op_norm(&t);
            assert!(max_abs(&(&a * &t - identity(6))) < 1e-9 * scale * op_norm(&a));
            assert!(max_abs(&(&t * &a - identity(6))) < 1e-9 * scale * op_norm(&a));
        }
    }

    #[test]
    fn b_stays_bounded_and_d_inverts_it() {
        let f = family();
        let s = kernel_projection(&f.a0, 1e-9, 100.0).unwrap().projection;
        let norms: Vec<f64> = [1e-2, 1e-4, 1e-6, 1e-8].iter().map(|&z| op_norm(&b_operator(&f, &s, z).unwrap())).collect();
        let (lo, hi) = norms.iter().fold((f64::MAX, 0.0f64), |(l, h), &x| (l.min(x), h.max(x)));
        assert!(hi / lo < 1.1, "{norms:?}");
        let z = 1e-3;
        let b = b_operator(&f, &s, z).unwrap();
        let d = d_operator(&f, &s, z).unwrap();
        assert!(max_abs(&(&b * &d - identity(2))) < 1e-9);
        assert!(max_abs(&(&d * &b - identity(2))) < 1e-9);
    }

    #[test]
    fn b_tends_to_compressed_a1() {
        let f = family();
        let s = kernel_projection(&f.a0, 1e-9, 100.0).unwrap().projection;
        let want = s.frame.adjoint() * f.a1(0.0) * &s.frame;
        let got = b_operator(&f, &s, 1e-7).unwrap();
        assert!(max_abs(&(got - want)) < 1e-5);
    }

    #[test]
    fn empty_projection_is_plain_inverse() {
        let mut f = family();
        f.a0 = &f.a0 + identity(6) * Scale(c(0.25));
        let s = Projection::empty(6);
        let t = singular_inverse(&f, &s, 0.1).unwrap();
        assert!(max_abs(&(t - inverse(&f.at(0.1)))) < 1e-12);
        assert!(b_operator(&f, &s, 0.1).is_err());
    }

    #[test]
    fn frame_rotation_invariance() {
        let f = family();
        let s = kernel_projection(&f.a0, 1e-9, 100.0).unwrap().projection;
        let th: f64 = 0.7;
        let q = Mat::from_fn(2, 2, |i, j| match (i, j) {
            (0, 0) => C64::from_polar(1.0, 0.3) * th.cos(),
            (0, 1) => c(-th.sin()),
            (1, 0) => C64::from_polar(1.0, 0.3) * th.sin(),
            _ => c(th.cos()),
        });
        let s2 = Projection::from_frame(&s.frame * &q);
        let t1 = singular_inverse(&f, &s, 1e-4).unwrap();
        let t2 = singular_inverse(&f, &s2, 1e-4).unwrap();
        assert!(max_abs(&(&t1 - &t2)) < 1e-10 * max_abs(&t1));
    }

    #[test]
    fn singular_b_is_reported() {
        // A1 vanishing on the kernel makes B(z) -> 0
        let f = family();
        let s = kernel_projection(&f.a0, 1e-9, 100.0).unwrap().projection;
        let p = s.matrix();
        let comp = identity(6) - &p;
        let g = LinearFamily { a0: f.a0.clone(), b: &comp * &f.b * &comp, c: Mat::zeros(6, 6) };
        assert!(matches!(singular_inverse(&g, &s, 1e-3), Err(ScopeError::BNotInvertible)));
    }
}
