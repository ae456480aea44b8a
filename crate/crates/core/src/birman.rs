//! The Birman-Schwinger family A(lambda) = U + v R0(lambda^2) v and its Taylor pieces.
//!
//! Off the support of V the family is the identity, so every matrix here lives
//! on the support block; `embed` restores the full grid size when needed.

use crate::error::{Result, ScopeError};
use crate::grid::{cell_self_integral, dist, Grid3};
use crate::inversion::OperatorFamily;
use crate::linalg::{czero, par_build, CMat};
use crate::potential::PotentialSplit;
use faer::Mat;
use num_complex::Complex64 as C64;
use std::f64::consts::PI;

/// (e^{ix} - 1)/x without cancellation; i at x = 0.
pub fn phi1(x: f64) -> C64 {
    if x.abs() < 1e-4 {
        // i (1 + ix/2 + (ix)^2/6 + (ix)^3/24)
        let ix = C64::new(0.0, x);
        C64::new(0.0, 1.0) * (1.0 + ix * (0.5 + ix * (1.0 / 6.0 + ix / 24.0)))
    } else {
        let s = (0.5 * x).sin();
        C64::new(-2.0 * s * s, x.sin()) / x
    }
}

/// (e^{ix} - 1 - ix)/x^2 without cancellation; -1/2 at x = 0.
pub fn phi2(x: f64) -> C64 {
    if x.abs() < 0.5 {
        // sum_{k>=2} (ix)^k / k! / x^2 = sum_{k>=2} i^k x^{k-2} / k!
        let mut term = C64::new(-0.5, 0.0);
        let mut sum = term;
        for k in 3..24 {
            term *= C64::new(0.0, x) / k as f64;
            sum += term;
        }
        sum
    } else {
        let s = (0.5 * x).sin();
        C64::new(-2.0 * s * s, x.sin() - x) / (x * x)
    }
}

#[derive(Debug, Clone)]
pub struct BirmanSchwingerFamily {
    pub grid: Grid3,
    pub split: PotentialSplit,
    /// Support point coordinates, in the order of `split.support`.
    pub points: Vec<[f64; 3]>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    /// Pairwise distances between support points.
    pub dist: Mat<f64>,
    pub a0: CMat,
    pub lambda_band: f64,
    /// Hermitian correction subtracted from every A(lambda); empty unless `deflate` was called.
    pub deflation: CMat,
}

impl BirmanSchwingerFamily {
    pub fn new(split: &PotentialSplit) -> Result<Self> {
        let grid = split.grid;
        if split.v.len() != grid.len() {
            return Err(ScopeError::Config("potential split does not match grid".into()));
        }
        let points: Vec<[f64; 3]> = split.support.iter().map(|&p| grid.point(p)).collect();
        let u: Vec<f64> = split.support.iter().map(|&p| split.u[p]).collect();
        let v: Vec<f64> = split.support.iter().map(|&p| split.v[p]).collect();
        let m = points.len();
        let d = Mat::from_fn(m, m, |i, j| dist(&points[i], &points[j]));
        let mut fam = Self { grid, split: split.clone(), points, u, v, dist: d, a0: Mat::zeros(0, 0), lambda_band: 0.5 / grid.l, deflation: Mat::zeros(0, 0) };
        fam.a0 = fam.a(0.0);
        Ok(fam)
    }

    pub fn dim(&self) -> usize {
        self.points.len()
    }

    fn w3(&self) -> f64 {
        self.grid.weight()
    }

    /// A(lambda) = U + v R0(lambda) v on the support.
    pub fn a(&self, lambda: f64) -> CMat {
        let h = self.grid.h;
        let w3 = self.w3();
        let diag0 = h * h * cell_self_integral();
        let deflated = self.deflation.nrows() > 0;
        par_build(self.dim(), self.dim(), |i, j| {
            let vv = self.v[i] * self.v[j];
            let shift = if deflated { self.deflation[(i, j)] } else { czero() };
            if i == j {
                C64::new(self.u[i] + vv * diag0, vv * lambda * w3 / (4.0 * PI)) - shift
            } else {
                let r = self.dist[(i, j)];
                C64::from_polar(vv * w3 / (4.0 * PI * r), lambda * r) - shift
            }
        })
    }

    /// Remove the eigenvalues `mu` carried by the orthonormal columns of `frame` from A0
    /// (and so from every A(lambda)), making that subspace an exact kernel.
    pub fn deflate(&mut self, frame: &CMat, mu: &[f64]) {
        let k = frame.ncols();
        assert_eq!(k, mu.len());
        if k == 0 {
            return;
        }
        let d = Mat::from_fn(k, k, |i, j| if i == j { C64::new(mu[i], 0.0) } else { czero() });
        let shift = frame * d * frame.adjoint();
        self.deflation = if self.deflation.nrows() == 0 { shift } else { &self.deflation + shift };
        self.a0 = self.a(0.0);
    }

    /// A1(lambda) = (A(lambda) - A0)/lambda, continuous at 0 with A1(0) = i v G1 v.
    pub fn a1(&self, lambda: f64) -> CMat {
        let w3 = self.w3();
        par_build(self.dim(), self.dim(), |i, j| {
            let vv = self.v[i] * self.v[j] * w3 / (4.0 * PI);
            if i == j {
                C64::new(0.0, vv)
            } else {
                phi1(lambda * self.dist[(i, j)]) * vv
            }
        })
    }

    /// A2(lambda) = (A1(lambda) - A1(0))/lambda; A2(0) = -v G2 v.
    pub fn a2(&self, lambda: f64) -> CMat {
        let w3 = self.w3();
        par_build(self.dim(), self.dim(), |i, j| {
            if i == j {
                czero()
            } else {
                let r = self.dist[(i, j)];
                phi2(lambda * r) * (self.v[i] * self.v[j] * w3 * r / (4.0 * PI))
            }
        })
    }

    /// v G_j v on the support (real kernels, weighted).
    pub fn v_gj_v(&self, j: u8) -> CMat {
        let h = self.grid.h;
        par_build(self.dim(), self.dim(), |p, q| {
            let r = if p == q { 0.0 } else { self.dist[(p, q)] };
            crate::grid::kernel_entry(crate::grid::KernelKind::Gj(j), h, r) * (self.v[p] * self.v[q])
        })
    }

    /// Euclidean projection onto v: v v^T / |v|^2 (equal to the weighted one on a uniform grid).
    pub fn p_v(&self) -> CMat {
        let nv: f64 = self.v.iter().map(|x| x * x).sum();
        Mat::from_fn(self.dim(), self.dim(), |i, j| C64::new(self.v[i] * self.v[j] / nv, 0.0))
    }

    pub fn alpha(&self) -> f64 {
        self.split.alpha
    }

    /// Full-grid matrix with `block` on the support and `rest` times identity elsewhere.
    pub fn embed(&self, block: &CMat, rest: C64) -> CMat {
        let n = self.grid.len();
        let mut full = Mat::<C64>::zeros(n, n);
        let on: Vec<Option<usize>> = {
            let mut map = vec![None; n];
            for (k, &p) in self.split.support.iter().enumerate() {
                map[p] = Some(k);
            }
            map
        };
        for p in 0..n {
            match on[p] {
                Some(i) => {
                    for (j, &q) in self.split.support.iter().enumerate() {
                        full[(p, q)] = block[(i, j)];
                    }
                }
                None => full[(p, p)] = rest,
            }
        }
        full
    }

    /// Support vector (as a full grid vector).
    pub fn embed_vector(&self, x: &[C64]) -> Vec<C64> {
        let mut out = vec![czero(); self.grid.len()];
        for (k, &p) in self.split.support.iter().enumerate() {
            out[p] = x[k];
        }
        out
    }
}

impl OperatorFamily for BirmanSchwingerFamily {
    fn dim(&self) -> usize {
        self.points.len()
    }
    fn a0(&self) -> &CMat {
        &self.a0
    }
    fn a1(&self, z: f64) -> CMat {
        BirmanSchwingerFamily::a1(self, z)
    }
    fn at(&self, z: f64) -> CMat {
        self.a(z)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_free_resolvent_plus, build_grid};
    use crate::linalg::{hermitian_defect, max_abs};
    use crate::potential::{split_potential, split_samples, Potential};
    use faer::Scale;

    fn family(c: f64) -> BirmanSchwingerFamily {
        let g = build_grid(8, 2.0).unwrap();
        let s = split_potential(&Potential::smooth_well(c, 1.6), &g).unwrap();
        BirmanSchwingerFamily::new(&s).unwrap()
    }

    #[test]
    fn phi_series_join_smoothly() {
        for x in [1e-4, 0.5] {
            let lo = x * (1.0 - 1e-12);
            let hi = x * (1.0 + 1e-12);
            assert!((phi1(lo) - phi1(hi)).norm() < 1e-12);
            assert!((phi2(lo) - phi2(hi)).norm() < 1e-12);
        }
        assert_eq!(phi1(0.0), C64::new(0.0, 1.0));
        assert_eq!(phi2(0.0), C64::new(-0.5, 0.0));
        let x: f64 = 0.3;
        let want = (C64::new(0.0, x).exp() - 1.0 - C64::new(0.0, x)) / (x * x);
        assert!((phi2(x) - want).norm() < 1e-12);
    }

    #[test]
    fn zero_potential_gives_identity() {
        let g = build_grid(4, 1.0).unwrap();
        let s = split_samples(&g, &vec![0.0; 64]).unwrap();
        let f = BirmanSchwingerFamily::new(&s).unwrap();
        assert_eq!(f.dim(), 0);
        let full = f.embed(&f.a0, C64::new(1.0, 0.0));
        assert_eq!(max_abs(&(full - crate::linalg::identity(64))), 0.0);
    }

    #[test]
    fn a0_is_real_symmetric() {
        let f = family(3.0);
        assert_eq!(hermitian_defect(&f.a0), 0.0);
        assert!(f.a0.col_iter().all(|c| c.iter().all(|z| z.im == 0.0)));
    }

    #[test]
    fn taylor_identity_and_bounds() {
        let f = family(3.0);
        for lam in [0.3, 1e-3, -0.2] {
            let lhs = f.a(lam);
            let rhs = &f.a0 + f.a1(lam) * Scale(C64::new(lam, 0.0));
            assert!(max_abs(&(lhs - rhs)) < 1e-15);
            let a1 = f.a1(lam);
            for i in 0..f.dim() {
                for j in 0..f.dim() {
                    let bound = f.v[i] * f.v[j] * f.grid.weight() / (4.0 * PI);
                    assert!(a1[(i, j)].norm() <= bound * (1.0 + 1e-14));
                }
            }
        }
    }

    #[test]
    fn a1_at_zero_is_rank_one_projection() {
        let f = family(3.0);
        let want = f.p_v() * Scale(C64::new(0.0, f.alpha() / (4.0 * PI)));
        let got = f.a1(0.0);
        assert!(max_abs(&(got - want)) < 1e-15 * f.alpha());
    }

    #[test]
    fn a2_is_difference_quotient_of_a1() {
        let f = family(3.0);
        let a10 = f.a1(0.0);
        let lam = 1e-3;
        let dq = (f.a1(lam) - &a10) * Scale(C64::new(1.0 / lam, 0.0));
        let a2 = f.a2(lam);
        assert!(max_abs(&(&dq - &a2)) < 1e-9 * max_abs(&a2));
        let a20 = f.a2(0.0);
        let vg2v = f.v_gj_v(2);
        assert!(max_abs(&(&a20 + &vg2v)) < 1e-15);
        // |A1(lambda) - A1(0)| / lambda stays bounded
        let ratios: Vec<f64> = [1e-2, 1e-3, 1e-4].iter().map(|&l| max_abs(&(f.a1(l) - &a10)) / l).collect();
        assert!(ratios.iter().all(|r| *r < 2.0 * max_abs(&a20)), "{ratios:?}");
    }

    #[test]
    fn conjugation_symmetry() {
        let f = family(2.0);
        let p = f.a(0.4);
        let m = f.a(-0.4);
        let d = Mat::from_fn(f.dim(), f.dim(), |i, j| p[(i, j)] - m[(i, j)].conj());
        assert_eq!(max_abs(&d), 0.0);
    }

    #[test]
    fn support_block_matches_full_grid_assembly() {
        let f = family(2.0);
        let g = f.grid;
        let r0 = build_free_resolvent_plus(&g, 0.35).unwrap().entries;
        let n = g.len();
        let full = Mat::from_fn(n, n, |p, q| {
            let u = if p == q { C64::new(f.split.u[p], 0.0) } else { czero() };
            u + r0[(p, q)] * (f.split.v[p] * f.split.v[q])
        });
        let emb = f.embed(&f.a(0.35), C64::new(1.0, 0.0));
        assert!(max_abs(&(full - emb)) < 1e-15);
    }

    #[test]
    fn parity_commutes_with_a0() {
        let f = family(2.5);
        let g = f.grid;
        let index: std::collections::HashMap<usize, usize> = f.split.support.iter().enumerate().map(|(k, &p)| (p, k)).collect();
        let perm: Vec<usize> = f.split.support.iter().map(|&p| index[&g.parity(p)]).collect();
        for i in 0..f.dim() {
            for j in 0..f.dim() {
                assert!((f.a0[(i, j)] - f.a0[(perm[i], perm[j])]).norm() < 1e-14);
            }
        }
    }
}
