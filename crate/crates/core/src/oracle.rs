//! Independent reference computations used by tests and the self-test.
//! None of these share code paths with the methods they check.

use crate::inversion::LinearFamily;
use crate::linalg::{dot2, inverse, CMat};
use faer::Mat;
use num_complex::Complex64 as C64;
use rand::Rng;

/// Residual I - (A0 + z A1) X evaluated in doubled precision, with A(z) never rounded.
fn exact_residual(a0: &CMat, a1: &CMat, z: f64, x: &CMat) -> CMat {
    let n = a0.nrows();
    crate::linalg::par_build(n, n, |i, j| {
        // terms of sum_l (a0_il + z a1_il) x_lj, real and imaginary parts
        let mut re: Vec<(f64, f64)> = Vec::with_capacity(8 * n + 1);
        let mut im: Vec<(f64, f64)> = Vec::with_capacity(8 * n + 1);
        for l in 0..n {
            let xv = x[(l, j)];
            let a = a0[(i, l)];
            re.push((a.re, xv.re));
            re.push((-a.im, xv.im));
            im.push((a.re, xv.im));
            im.push((a.im, xv.re));
            // z * a1 split exactly into hi + lo parts
            for part in split_scaled(z, a1[(i, l)]) {
                re.push((part.re, xv.re));
                re.push((-part.im, xv.im));
                im.push((part.re, xv.im));
                im.push((part.im, xv.re));
            }
        }
        let delta = if i == j { 1.0 } else { 0.0 };
        re.push((-1.0, delta));
        C64::new(-dot2(re.into_iter()), -dot2(im.into_iter()))
    })
}

fn split_scaled(z: f64, a: C64) -> [C64; 2] {
    let hr = z * a.re;
    let hi = z * a.im;
    [C64::new(hr, hi), C64::new(z.mul_add(a.re, -hr), z.mul_add(a.im, -hi))]
}

/// Inverse of A0 + z A1 by LU plus iterative refinement with exact residuals.
pub fn refined_inverse(a0: &CMat, a1: &CMat, z: f64) -> CMat {
    let n = a0.nrows();
    let az = a0 + a1 * faer::Scale(C64::new(z, 0.0));
    let x0 = inverse(&az);
    let mut x = x0.clone();
    for _ in 0..6 {
        let r = exact_residual(a0, a1, z, &x);
        x = &x + &x0 * &r;
    }
    debug_assert_eq!(x.nrows(), n);
    x
}

fn sylvester_hadamard(n: usize) -> Vec<Vec<f64>> {
    let mut h = vec![vec![1.0]];
    while h.len() < n {
        let m = h.len();
        let mut next = vec![vec![0.0; 2 * m]; 2 * m];
        for i in 0..m {
            for j in 0..m {
                next[i][j] = h[i][j];
                next[i][j + m] = h[i][j];
                next[i + m][j] = h[i][j];
                next[i + m][j + m] = -h[i][j];
            }
        }
        h = next;
    }
    h
}

/// Random Hermitian 8x8 family with an exactly representable kernel of dimension
/// `kernel_dim`: A0 = H D H^T / 8 for a signed, permuted Hadamard H and integer D,
/// and A1(z) = B + z C with dyadic complex entries.
pub fn random_singular_family<R: Rng>(rng: &mut R, kernel_dim: usize) -> LinearFamily {
    let n = 8;
    let base = sylvester_hadamard(n);
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        perm.swap(i, rng.random_range(0..=i));
    }
    let signs: Vec<f64> = (0..n).map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 }).collect();
    let h = |i: usize, j: usize| signs[i] * base[perm[i]][j];
    let d: Vec<f64> = (0..n)
        .map(|k| {
            if k < kernel_dim {
                0.0
            } else {
                let m = rng.random_range(1..=4) as f64;
                if rng.random_bool(0.5) { m } else { -m }
            }
        })
        .collect();
    let a0 = Mat::from_fn(n, n, |i, j| C64::new((0..n).map(|k| h(i, k) * d[k] * h(j, k)).sum::<f64>() / 8.0, 0.0));
    let mut dyadic = || C64::new(rng.random_range(-8..=8) as f64 / 8.0, rng.random_range(-8..=8) as f64 / 8.0);
    let mut b = Mat::from_fn(n, n, |_, _| dyadic());
    for i in 0..n {
        b[(i, i)] += C64::new(2.0, 0.0);
    }
    let c = Mat::from_fn(n, n, |_, _| dyadic());
    LinearFamily { a0, b, c }
}

/// max |I - A X| for a claimed inverse, with A(z) formed exactly.
pub fn inverse_residual(a0: &CMat, a1: &CMat, z: f64, x: &CMat) -> f64 {
    let r = exact_residual(a0, a1, z, x);
    crate::linalg::max_abs(&r)
}

/// int_0^inf (1 - sin u / u) / u^2 du by direct quadrature (the exact value is pi/4).
pub fn neutral_coulomb_constant() -> f64 {
    static C: std::sync::OnceLock<f64> = std::sync::OnceLock::new();
    *C.get_or_init(|| {
        let f = |u: f64| {
            if u < 1e-2 {
                let u2 = u * u;
                1.0 / 6.0 - u2 / 120.0 + u2 * u2 / 5040.0
            } else {
                (1.0 - u.sin() / u) / (u * u)
            }
        };
        let cut = 1000.0f64;
        let (body, _, _) = crate::quad::adaptive_real(f, 0.0, cut, 1e-14, 20000);
        // tail: 1/U - int_U^inf sin u / u^3, the latter by two integrations by parts
        body + 1.0 / cut - (cut.cos() / cut.powi(3) - 3.0 * cut.sin() / cut.powi(4))
    })
}

/// L2(R^3) Gram matrix of Newtonian potentials of neutral point-charge clouds.
///
/// Column j of `charges` holds the charges at `points`; each column must sum to zero
/// for the pairing to converge. Evaluated in Fourier space as
/// (2 pi)^-3 int |q^(k)|^2 / |k|^4 dk, radially reduced to the constant above.
pub fn coulomb_gram(points: &[[f64; 3]], charges: &CMat) -> CMat {
    let c = neutral_coulomb_constant() / (2.0 * std::f64::consts::PI.powi(2));
    let m = points.len();
    let k = charges.ncols();
    let d = Mat::from_fn(m, m, |a, b| C64::new(-c * crate::grid::dist(&points[a], &points[b]), 0.0));
    let dq = &d * charges;
    Mat::from_fn(k, k, |i, j| (0..m).map(|a| charges[(a, i)].conj() * dq[(a, j)]).sum())
}

/// Closed-form e^{-it Delta} applied to e^{-|x|^2/(2 sigma^2)}.
pub fn free_gaussian(sigma: f64, t: f64, x: &[f64; 3]) -> C64 {
    let s = C64::new(sigma * sigma, 0.0);
    let q = s - C64::new(0.0, 2.0 * t);
    let ratio = s / q;
    let r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
    ratio * ratio.sqrt() * (-r2 / (2.0 * q)).exp()
}
