//! Cell-centred cubic grid and the dense convolution kernels G_j, R0+(lambda).

use crate::error::{Result, ScopeError};
use crate::linalg::{par_build, CMat};
use num_complex::Complex64 as C64;
use std::f64::consts::PI;
use std::sync::OnceLock;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid3 {
    pub n: usize,
    pub l: f64,
    pub h: f64,
}

pub fn build_grid(n: usize, l: f64) -> Result<Grid3> {
    if n < 4 {
        return Err(ScopeError::InvalidGrid(format!("n = {n} < 4")));
    }
    if !(l > 0.0) || !l.is_finite() {
        return Err(ScopeError::InvalidGrid(format!("half-width L = {l} must be positive")));
    }
    Ok(Grid3 { n, l, h: 2.0 * l / n as f64 })
}

impl Grid3 {
    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn weight(&self) -> f64 {
        self.h * self.h * self.h
    }

    pub fn coord(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.h - self.l
    }

    /// Flat index for (i, j, k); k runs fastest.
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.n + j) * self.n + k
    }

    pub fn ijk(&self, p: usize) -> (usize, usize, usize) {
        let n = self.n;
        (p / (n * n), (p / n) % n, p % n)
    }

    pub fn point(&self, p: usize) -> [f64; 3] {
        let (i, j, k) = self.ijk(p);
        [self.coord(i), self.coord(j), self.coord(k)]
    }

    pub fn points(&self) -> Vec<[f64; 3]> {
        (0..self.len()).map(|p| self.point(p)).collect()
    }

    /// Index of the mirror point x -> -x.
    pub fn parity(&self, p: usize) -> usize {
        let (i, j, k) = self.ijk(p);
        let m = self.n - 1;
        self.index(m - i, m - j, m - k)
    }
}

pub fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

pub fn norm3(a: &[f64; 3]) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

#[derive(Debug, Clone)]
pub struct GridFunction {
    pub grid: Grid3,
    pub values: Vec<C64>,
}

impl GridFunction {
    pub fn new(grid: Grid3, values: Vec<C64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(ScopeError::Config(format!("{} values for {} grid points", values.len(), grid.len())));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(ScopeError::NonFinite("grid function entry".into()));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: Grid3, f: impl Fn([f64; 3]) -> C64) -> Self {
        let values = (0..grid.len()).map(|p| f(grid.point(p))).collect();
        Self { grid, values }
    }

    /// Weighted inner product h^3 sum conj(f) g.
    pub fn inner(&self, other: &GridFunction) -> C64 {
        let s: C64 = self.values.iter().zip(&other.values).map(|(a, b)| a.conj() * b).sum();
        s * self.grid.weight()
    }

    pub fn l2_norm(&self) -> f64 {
        (self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.grid.weight()).sqrt()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.norm()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelKind {
    Gj(u8),
    FreeResolventPlus(f64),
}

/// How the singular or coincident diagonal entry was filled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DiagonalRule {
    /// h^2 I0, the exact cell average of 1/(4 pi |r|).
    CellAverage,
    /// The kernel formula evaluated at distance zero.
    Formula,
    /// Cell average plus the first-order phase i lambda h^3/(4 pi).
    CellAverageWithPhase,
}

#[derive(Debug, Clone)]
pub struct KernelMatrix {
    pub grid: Grid3,
    pub kind: KernelKind,
    pub entries: CMat,
    pub diagonal_rule: DiagonalRule,
}

fn cube_face_integral() -> f64 {
    // Integral over [0,1]^2 of (1+s^2+t^2)^(-1/2); the cube self-integral reduces
    // to it after splitting into six pyramids and scaling along the ray.
    let inner = |s: f64| {
        let (v, _, ok) = crate::quad::adaptive_real(|t| (1.0 + s * s + t * t).powf(-0.5), 0.0, 1.0, 1e-14, 200);
        assert!(ok);
        v
    };
    let (v, _, ok) = crate::quad::adaptive_real(inner, 0.0, 1.0, 1e-13, 200);
    assert!(ok);
    v
}

/// I0 = integral over the unit cube (centred) of 1/(4 pi |r|).
pub fn cell_self_integral() -> f64 {
    static I0: OnceLock<f64> = OnceLock::new();
    *I0.get_or_init(|| 3.0 * cube_face_integral() / (4.0 * PI))
}

fn factorial(j: u8) -> f64 {
    (1..=j as u32).map(|k| k as f64).product()
}

/// Weighted kernel entry between two points at distance r (r = 0 means diagonal).
pub fn kernel_entry(kind: KernelKind, h: f64, r: f64) -> C64 {
    let w = h * h * h;
    match kind {
        KernelKind::Gj(0) => {
            if r == 0.0 {
                C64::new(h * h * cell_self_integral(), 0.0)
            } else {
                C64::new(w / (4.0 * PI * r), 0.0)
            }
        }
        KernelKind::Gj(1) => C64::new(w / (4.0 * PI), 0.0),
        KernelKind::Gj(j) => C64::new(w * r.powi(j as i32 - 1) / (4.0 * PI * factorial(j)), 0.0),
        KernelKind::FreeResolventPlus(lam) => {
            if r == 0.0 {
                C64::new(h * h * cell_self_integral(), lam * w / (4.0 * PI))
            } else {
                C64::from_polar(w / (4.0 * PI * r), lam * r)
            }
        }
    }
}

pub fn build_gj_kernel(grid: &Grid3, j: u8) -> Result<KernelMatrix> {
    if j > 3 {
        return Err(ScopeError::Config(format!("kernel order j = {j} outside 0..=3")));
    }
    let kind = KernelKind::Gj(j);
    Ok(KernelMatrix {
        grid: *grid,
        kind,
        entries: assemble(grid, kind),
        diagonal_rule: if j == 0 { DiagonalRule::CellAverage } else { DiagonalRule::Formula },
    })
}

pub fn build_free_resolvent_plus(grid: &Grid3, lambda: f64) -> Result<KernelMatrix> {
    if !lambda.is_finite() {
        return Err(ScopeError::NonFinite(format!("lambda = {lambda}")));
    }
    let kind = KernelKind::FreeResolventPlus(lambda);
    Ok(KernelMatrix { grid: *grid, kind, entries: assemble(grid, kind), diagonal_rule: DiagonalRule::CellAverageWithPhase })
}

fn assemble(grid: &Grid3, kind: KernelKind) -> CMat {
    let pts = grid.points();
    let h = grid.h;
    par_build(pts.len(), pts.len(), |p, q| kernel_entry(kind, h, if p == q { 0.0 } else { dist(&pts[p], &pts[q]) }))
}

/// Apply a kernel between arbitrary target points and grid source points.
pub fn kernel_apply(kind: KernelKind, h: f64, targets: &[[f64; 3]], sources: &[[f64; 3]], charge: &[C64]) -> Vec<C64> {
    use rayon::prelude::*;
    targets
        .par_iter()
        .map(|x| {
            sources
                .iter()
                .zip(charge)
                .map(|(y, c)| {
                    let r = dist(x, y);
                    kernel_entry(kind, h, if r < 1e-12 * h { 0.0 } else { r }) * c
                })
                .sum()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{max_abs, transpose_defect};

    #[test]
    fn grid_examples() {
        assert!(build_grid(2, 1.0).is_err());
        assert!(build_grid(8, 0.0).is_err());
        let g = build_grid(4, 2.0).unwrap();
        assert_eq!(g.len(), 64);
        assert_eq!(g.h, 1.0);
        let g = build_grid(12, 3.0).unwrap();
        assert_eq!(g.len(), 1728);
        assert_eq!(g.h, 0.5);
        let nearest = g.points().into_iter().map(|p| norm3(&p)).fold(f64::MAX, f64::min);
        assert!((nearest - 0.25 * 3f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn parity_maps_points_to_negatives() {
        let g = build_grid(6, 1.5).unwrap();
        for p in 0..g.len() {
            let a = g.point(p);
            let b = g.point(g.parity(p));
            assert!(a.iter().zip(&b).all(|(x, y)| (x + y).abs() < 1e-14));
        }
    }

    #[test]
    fn cell_integral_matches_closed_form() {
        // closed form of the cube integral of 1/|r|: 3 ln(2+sqrt3) - pi/2
        let exact = (3.0 * (2.0 + 3f64.sqrt()).ln() - PI / 2.0) / (4.0 * PI);
        assert!((cell_self_integral() - exact).abs() < 1e-12 * exact);
    }

    #[test]
    fn kernel_densities() {
        let g = build_grid(4, 2.0).unwrap();
        let w = g.weight();
        let g1 = build_gj_kernel(&g, 1).unwrap();
        assert!((g1.entries[(0, 5)].re / w - 1.0 / (4.0 * PI)).abs() < 1e-15);
        assert!((kernel_entry(KernelKind::Gj(2), 1.0, 2.0).re - 1.0 / (4.0 * PI)).abs() < 1e-15);
        assert!((kernel_entry(KernelKind::FreeResolventPlus(PI), 1.0, 1.0) - C64::new(-1.0 / (4.0 * PI), 0.0)).norm() < 1e-15);
        assert!(build_gj_kernel(&g, 4).is_err());
        assert!(build_free_resolvent_plus(&g, f64::NAN).is_err());
    }

    #[test]
    fn resolvent_at_zero_is_g0_and_symmetric() {
        let g = build_grid(4, 1.0).unwrap();
        let r0 = build_free_resolvent_plus(&g, 0.0).unwrap();
        let g0 = build_gj_kernel(&g, 0).unwrap();
        assert_eq!(max_abs(&(&r0.entries - &g0.entries)), 0.0);
        let r = build_free_resolvent_plus(&g, 0.7).unwrap();
        assert_eq!(transpose_defect(&r.entries), 0.0);
    }

    #[test]
    fn taylor_expansion_in_lambda() {
        let g = build_grid(4, 1.0).unwrap();
        let gs: Vec<_> = (0..3).map(|j| build_gj_kernel(&g, j).unwrap().entries).collect();
        let mut prev = f64::MAX;
        for lam in [0.2, 0.1, 0.05] {
            let r = build_free_resolvent_plus(&g, lam).unwrap().entries;
            let c = C64::new(0.0, lam);
            let d = &r - &gs[0] - &gs[1] * faer::Scale(c) - &gs[2] * faer::Scale(c * c);
            let e = max_abs(&d);
            if prev < f64::MAX {
                assert!((prev / e - 8.0).abs() < 0.3, "ratio {}", prev / e);
            }
            prev = e;
        }
    }

    #[test]
    fn newtonian_potential_converges_at_second_order() {
        // Gaussian charge of unit mass; exact potential erf(r/(sqrt2 s))/(4 pi r)
        let s: f64 = 0.45;
        let target = [2.0, 0.3, -0.4];
        let exact = {
            let r = norm3(&target);
            let x = r / (2f64.sqrt() * s);
            erf(x) / (4.0 * PI * r)
        };
        let mut errs = Vec::new();
        for n in [8usize, 16, 32] {
            let g = build_grid(n, 2.4).unwrap();
            let pts = g.points();
            let rho: Vec<C64> = pts
                .iter()
                .map(|p| C64::new((-(norm3(p).powi(2)) / (2.0 * s * s)).exp() / (2.0 * PI * s * s).powf(1.5), 0.0))
                .collect();
            let v = kernel_apply(KernelKind::Gj(0), g.h, &[target], &pts, &rho)[0];
            errs.push((v.re - exact).abs());
        }
        assert!(errs[1] < errs[0] / 3.0 && errs[2] < errs[1] / 3.0, "{errs:?}");
    }

    #[test]
    fn helmholtz_residual_off_support() {
        let g = build_grid(16, 4.0).unwrap();
        let lam = 0.6;
        let pts = g.points();
        let rho: Vec<C64> = pts.iter().map(|p| C64::new((-(norm3(p).powi(2)) / 0.5).exp(), 0.0)).collect();
        let r0 = build_free_resolvent_plus(&g, lam).unwrap();
        let col = faer::Mat::from_fn(g.len(), 1, |p, _| rho[p]);
        let u = &r0.entries * &col;
        let h2 = g.h * g.h;
        let mut worst: f64 = 0.0;
        for i in 2..14 {
            for j in 2..14 {
                for k in 2..14 {
                    let p = g.index(i, j, k);
                    if norm3(&g.point(p)) < 2.5 {
                        continue;
                    }
                    let lap = (u[(g.index(i + 1, j, k), 0)] + u[(g.index(i - 1, j, k), 0)] + u[(g.index(i, j + 1, k), 0)] + u[(g.index(i, j - 1, k), 0)] + u[(g.index(i, j, k + 1), 0)] + u[(g.index(i, j, k - 1), 0)] - u[(p, 0)] * 6.0) / h2;
                    let res = -lap - u[(p, 0)] * (lam * lam);
                    worst = worst.max(res.norm() / (lap.norm() + lam * lam * u[(p, 0)].norm()));
                }
            }
        }
        // finite-difference truncation is O(h^2 / r^2) relative to the Laplacian itself
        assert!(worst < 0.25 * h2, "relative residual {worst}");
    }

    fn erf(x: f64) -> f64 {
        let (v, _, _) = crate::quad::adaptive_real(|t| (-t * t).exp(), 0.0, x, 1e-14, 100);
        2.0 / PI.sqrt() * v
    }
}
