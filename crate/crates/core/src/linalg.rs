//! Thin helpers over faer for the dense complex algebra used everywhere.

use faer::linalg::solvers::DenseSolveCore;
use faer::{Mat, Side};
use num_complex::Complex64 as C64;

pub type CMat = Mat<C64>;

pub fn czero() -> C64 {
    C64::new(0.0, 0.0)
}

pub fn identity(n: usize) -> CMat {
    Mat::from_fn(n, n, |i, j| if i == j { C64::new(1.0, 0.0) } else { czero() })
}

pub fn inverse(a: &CMat) -> CMat {
    a.partial_piv_lu().inverse()
}

/// Solve `a x = b` by LU.
pub fn solve(a: &CMat, b: &CMat) -> CMat {
    use faer::linalg::solvers::Solve;
    a.partial_piv_lu().solve(b)
}

pub fn max_abs(a: &CMat) -> f64 {
    let mut m = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max(a[(i, j)].norm());
        }
    }
    m
}

pub fn frobenius(a: &CMat) -> f64 {
    let mut s = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            s += a[(i, j)].norm_sqr();
        }
    }
    s.sqrt()
}

/// Spectral norm (largest singular value).
pub fn op_norm(a: &CMat) -> f64 {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0.0;
    }
    a.singular_values().map(|s| s[0]).unwrap_or(f64::NAN)
}

pub fn singular_values(a: &CMat) -> Vec<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Vec::new();
    }
    a.singular_values().expect("svd did not converge")
}

/// 2-norm condition number via singular values.
pub fn condition(a: &CMat) -> f64 {
    let s = singular_values(a);
    match (s.first(), s.last()) {
        (Some(hi), Some(lo)) if *lo > 0.0 => hi / lo,
        _ => f64::INFINITY,
    }
}

/// Eigen-decomposition of a Hermitian matrix, ascending eigenvalues.
pub fn hermitian_eig(a: &CMat) -> (Vec<f64>, CMat) {
    let e = a.self_adjoint_eigen(Side::Lower).expect("eigensolver did not converge");
    let vals = (0..a.nrows()).map(|i| e.S()[i].re).collect();
    (vals, e.U().to_owned())
}

pub fn real_symmetric_eig(a: &Mat<f64>) -> (Vec<f64>, Mat<f64>) {
    let e = a.self_adjoint_eigen(Side::Lower).expect("eigensolver did not converge");
    let vals = (0..a.nrows()).map(|i| e.S()[i]).collect();
    (vals, e.U().to_owned())
}

pub fn real_symmetric_eigenvalues(a: &Mat<f64>) -> Vec<f64> {
    a.self_adjoint_eigenvalues(Side::Lower).expect("eigensolver did not converge")
}

pub fn to_complex(a: &Mat<f64>) -> CMat {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| C64::new(a[(i, j)], 0.0))
}

pub fn real_part(a: &CMat) -> Mat<f64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)].re)
}

/// Conjugate transpose, owned.
pub fn adjoint(a: &CMat) -> CMat {
    a.adjoint().to_owned()
}

pub fn hermitian_part(a: &CMat) -> CMat {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| 0.5 * (a[(i, j)] + a[(j, i)].conj()))
}

/// Largest deviation from Hermitian symmetry.
pub fn hermitian_defect(a: &CMat) -> f64 {
    let mut m = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    m
}

/// Largest deviation from (unconjugated) transpose symmetry.
pub fn transpose_defect(a: &CMat) -> f64 {
    let mut m = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max((a[(i, j)] - a[(j, i)]).norm());
        }
    }
    m
}

/// Orthonormalize the columns of `a` (thin QR), dropping nothing.
pub fn orthonormalize(a: &CMat) -> CMat {
    if a.ncols() == 0 {
        return a.clone();
    }
    let qr = a.qr();
    qr.compute_thin_Q()
}

/// Cosines of the principal angles between two orthonormal frames.
pub fn principal_cosines(q1: &CMat, q2: &CMat) -> Vec<f64> {
    let m = q1.adjoint() * q2;
    singular_values(&m)
}

/// Dense matrix built in parallel, one column per rayon task.
pub fn par_build<F>(rows: usize, cols: usize, f: F) -> CMat
where
    F: Fn(usize, usize) -> C64 + Sync,
{
    use rayon::prelude::*;
    let mut data = vec![czero(); rows * cols];
    if rows > 0 {
        data.par_chunks_mut(rows).enumerate().for_each(|(j, col)| {
            for (i, slot) in col.iter_mut().enumerate() {
                *slot = f(i, j);
            }
        });
    }
    faer::MatRef::from_column_major_slice(&data, rows, cols).to_owned()
}

/// Error-free product and sum (Dekker / Knuth) for compensated dot products.
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

/// Real dot product evaluated as if in twice the working precision.
pub fn dot2(x: impl Iterator<Item = (f64, f64)>) -> f64 {
    let (mut s, mut c) = (0.0, 0.0);
    for (a, b) in x {
        let (p, e) = two_prod(a, b);
        let (t, f) = two_sum(s, p);
        s = t;
        c += e + f;
    }
    s + c
}

/// Matrix product with compensated accumulation; used where the exact result is
/// tiny compared with its terms (an operator applied to its own near-kernel).
pub fn compensated_matmul(a: &CMat, b: &CMat) -> CMat {
    assert_eq!(a.ncols(), b.nrows());
    let k = a.ncols();
    par_build(a.nrows(), b.ncols(), |i, j| {
        let re = (0..k).flat_map(|l| {
            let (x, y) = (a[(i, l)], b[(l, j)]);
            [(x.re, y.re), (-x.im, y.im)]
        });
        let im = (0..k).flat_map(|l| {
            let (x, y) = (a[(i, l)], b[(l, j)]);
            [(x.re, y.im), (x.im, y.re)]
        });
        C64::new(dot2(re), dot2(im))
    })
}

/// 1-norm of a matrix (max column sum).
pub fn norm1(a: &CMat) -> f64 {
    (0..a.ncols()).map(|j| (0..a.nrows()).map(|i| a[(i, j)].norm()).sum::<f64>()).fold(0.0, f64::max)
}
