//! Low-energy kernels of e^{itH}: the band-limited K_{lambda0}(t, x, y), the explicit
//! t^{-1/2} part F_t, and the residual D(t) between them.
//!
//! Conventions: r_x(l)(p) = e^{i l |x-p|} / (4 pi |x-p|), S = h^3 v c_-1 v over the
//! support, and C(t, a) = sqrt(t) int e^{i t l^2 + i l a} chi dl = e^{-i a^2/4t} h(t) + C2.

use super::cutoff::{compute_h_of_t, h_limit, CutoffSpec};
use crate::error::{Result, ScopeError};
use crate::fit::{fit_loglog, LineFit};
use crate::grid::{dist, norm3, Grid3};
use crate::linalg::{par_build, singular_values, CMat};
use crate::quad::{composite_rule, gauss_legendre};
use crate::threshold::{free_kernel, Classification, LaurentExpansion, ThresholdData};
use faer::Mat;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SamplePair {
    pub x: [f64; 3],
    pub y: [f64; 3],
}

/// `count` distinct pairs of cell corners, stratified by |x| + |y|.
///
/// Corners never coincide with the cell-centred support points, so every kernel
/// below is evaluated off its diagonal singularity.
pub fn sample_pairs(grid: &Grid3, count: usize, seed: u64) -> Result<Vec<SamplePair>> {
    if count == 0 {
        return Err(ScopeError::Config("sample_pairs must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let corner = |rng: &mut ChaCha8Rng| -> [f64; 3] { std::array::from_fn(|_| -grid.l + rng.random_range(0..=grid.n) as f64 * grid.h) };
    let mut pool: Vec<SamplePair> = Vec::with_capacity(40 * count);
    while pool.len() < 40 * count {
        let (x, y) = (corner(&mut rng), corner(&mut rng));
        if x != y {
            pool.push(SamplePair { x, y });
        }
    }
    let key = |p: &SamplePair| norm3(&p.x) + norm3(&p.y);
    pool.sort_by(|a, b| key(a).total_cmp(&key(b)));
    // one draw from each of `count` equal-population strata
    let stride = pool.len() / count;
    Ok((0..count).map(|k| pool[k * stride + rng.random_range(0..stride)]).collect())
}

/// Distinct points among the pair endpoints, with each pair's indices into them.
fn endpoints(pairs: &[SamplePair]) -> (Vec<[f64; 3]>, Vec<[f64; 3]>, Vec<(usize, usize)>) {
    let mut xs: Vec<[f64; 3]> = Vec::new();
    let mut ys: Vec<[f64; 3]> = Vec::new();
    let mut idx = Vec::with_capacity(pairs.len());
    let find = |list: &mut Vec<[f64; 3]>, p: [f64; 3]| match list.iter().position(|q| *q == p) {
        Some(i) => i,
        None => {
            list.push(p);
            list.len() - 1
        }
    };
    for p in pairs {
        let i = find(&mut xs, p.x);
        let j = find(&mut ys, p.y);
        idx.push((i, j));
    }
    (xs, ys, idx)
}

/// h^3 v c v for a support-level coefficient matrix c.
fn weighted(td: &ThresholdData, c: &CMat) -> CMat {
    let fam = &td.family;
    let w = fam.grid.weight();
    par_build(fam.dim(), fam.dim(), |p, q| c[(p, q)] * (w * fam.v[p] * fam.v[q]))
}

/// x -> e^{-i |x-p|^2 / 4t} / |x-p| over the support.
fn phased_inverse_distance(td: &ThresholdData, pts: &[[f64; 3]], t: f64) -> CMat {
    let sup = &td.family.points;
    par_build(pts.len(), sup.len(), |i, p| {
        let d = dist(&pts[i], &sup[p]);
        C64::from_polar(1.0 / d, -d * d / (4.0 * t))
    })
}

/// int_0^a e^{-i b^2/4t} db.
fn fresnel_segment(a: f64, t: f64) -> C64 {
    let panels = 2 + (a * a / (4.0 * t * PI)).ceil() as usize;
    let (xs, ws) = composite_rule(0.0, a, panels, 20);
    xs.iter().zip(&ws).map(|(b, w)| C64::from_polar(*w, -b * b / (4.0 * t))).sum()
}

#[derive(Debug, Clone, Serialize)]
pub struct FtEvaluation {
    pub t: f64,
    pub h_of_t: C64,
    /// F_t at each sample pair.
    pub values: Vec<C64>,
    /// sigma_2 / sigma_1 of F_t on the distinct endpoints, for the pure-resonance case.
    pub rank_one_residual: Option<f64>,
    /// Whether the c_-2 contribution F_{1,t} is included.
    pub extra_terms: bool,
}

/// The coefficient of t^{-1/2} in the low-energy evolution kernel.
///
/// F_t(x, y) = (i h(t) / 16 pi^3) sum_pq e^{-i dxp^2/4t}/dxp S_pq e^{-i dyq^2/4t}/dyq.
/// When zero is an eigenvalue the c_-2 term adds
/// F_{1,t}(x, y) = -(h(t) / 16 pi^3) sum_pq S2_pq int_0^{dxp+dyq} e^{-i b^2/4t} db / (dxp dyq),
/// the P0 pole itself being left out as it belongs to the point spectrum.
pub fn compute_f_t(td: &ThresholdData, lau: &LaurentExpansion, cut: &CutoffSpec, t: f64, pairs: &[SamplePair]) -> Result<FtEvaluation> {
    let class = td.classification();
    if class == Classification::Regular {
        return Err(ScopeError::EmptySingularPart);
    }
    let h_of_t = compute_h_of_t(cut, t)?;
    let (xs, ys, idx) = endpoints(pairs);
    let s = weighted(td, &lau.c_minus1);
    let lx = phased_inverse_distance(td, &xs, t);
    let ly = phased_inverse_distance(td, &ys, t);
    let scale = C64::new(0.0, 1.0) * h_of_t / (16.0 * PI.powi(3));
    let full = &lx * &s * ly.transpose();
    let mut values: Vec<C64> = idx.iter().map(|&(i, j)| full[(i, j)] * scale).collect();
    let rank_one_residual = (class == Classification::ResonanceOnly).then(|| {
        let sv = singular_values(&full);
        if sv[0] > 0.0 {
            sv.get(1).copied().unwrap_or(0.0) / sv[0]
        } else {
            0.0
        }
    });
    let extra_terms = class.has_eigenvalue();
    if extra_terms {
        let s2 = weighted(td, &lau.c_minus2);
        let sup = &td.family.points;
        let coef = -h_of_t / (16.0 * PI.powi(3));
        let extra: Vec<C64> = pairs
            .par_iter()
            .map(|pr| {
                let dx: Vec<f64> = sup.iter().map(|p| dist(&pr.x, p)).collect();
                let dy: Vec<f64> = sup.iter().map(|p| dist(&pr.y, p)).collect();
                let mut acc = C64::new(0.0, 0.0);
                for p in 0..sup.len() {
                    for q in 0..sup.len() {
                        acc += s2[(p, q)] * fresnel_segment(dx[p] + dy[q], t) / (dx[p] * dy[q]);
                    }
                }
                acc * coef
            })
            .collect();
        for (v, e) in values.iter_mut().zip(extra) {
            *v += e;
        }
    }
    Ok(FtEvaluation { t, h_of_t, values, rank_one_residual, extra_terms })
}

/// A Gaussian test function e^{-|x-c|^2 / 2 sigma^2}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Gaussian {
    pub center: [f64; 3],
    pub sigma: f64,
}

impl Gaussian {
    /// int g(x) e^{-i |x-p|^2/4t} / |x-p| dx; `t = None` drops the phase.
    ///
    /// Averaging the Gaussian over spheres about p reduces this to
    /// (2 pi sigma^2 / d) int_0^inf e^{-i r^2/4t} [e^{-(r-d)^2/2s^2} - e^{-(r+d)^2/2s^2}] dr.
    pub fn potential(&self, p: &[f64; 3], t: Option<f64>) -> C64 {
        let s = self.sigma;
        let d = dist(&self.center, p);
        let Some(t) = t else {
            return if d < 1e-12 * s {
                C64::new(4.0 * PI * s * s, 0.0)
            } else {
                C64::new((2.0 * PI).powf(1.5) * s.powi(3) * libm::erf(d / (2f64.sqrt() * s)) / d, 0.0)
            };
        };
        let top = d + 12.0 * s;
        let panels = 8 + (top / s).ceil() as usize + (top * top / (4.0 * t * PI)).ceil() as usize;
        let (rs, ws) = composite_rule(0.0, top, panels, 20);
        let two_s2 = 2.0 * s * s;
        let bracket = |r: f64| {
            if d < 1e-12 * s {
                // d -> 0 limit of the difference quotient
                2.0 * r * (-r * r / two_s2).exp() * 2.0 / two_s2
            } else {
                ((-(r - d).powi(2) / two_s2).exp() - (-(r + d).powi(2) / two_s2).exp()) / d
            }
        };
        let integral: C64 = rs.iter().zip(&ws).map(|(r, w)| C64::from_polar(w * bracket(*r), -r * r / (4.0 * t))).sum();
        integral * (2.0 * PI * s * s)
    }
}

/// <F_t f, g> for Gaussians f, g, by exact shell averaging; `t = None` gives the t -> infinity limit.
pub fn weak_pairing(td: &ThresholdData, lau: &LaurentExpansion, cut: &CutoffSpec, t: Option<f64>, f: &Gaussian, g: &Gaussian) -> Result<C64> {
    if td.classification() == Classification::Regular {
        return Err(ScopeError::EmptySingularPart);
    }
    let h = match t {
        Some(t) => compute_h_of_t(cut, t)?,
        None => h_limit(),
    };
    let sup = &td.family.points;
    let s = weighted(td, &lau.c_minus1);
    let gx = Mat::from_fn(1, sup.len(), |_, p| g.potential(&sup[p], t));
    let fy = Mat::from_fn(sup.len(), 1, |p, _| f.potential(&sup[p], t));
    let v = (&gx * &s * &fy)[(0, 0)];
    Ok(v * C64::new(0.0, 1.0) * h / (16.0 * PI.powi(3)))
}

/// Chebyshev nodes of the first kind.
pub const CHEB_NODES: usize = 64;
/// Largest accepted interpolation residual, relative to the sampled magnitude.
pub const CHEB_TOLERANCE: f64 = 1e-6;
/// Default cap on the number of oscillations t lambda0^2 / 2 pi.
pub const DEFAULT_MAX_OSCILLATIONS: f64 = 1e4;

/// Coefficients of the degree N-1 interpolant through f at the first-kind nodes.
fn chebyshev_coefficients(values: &[C64]) -> Vec<C64> {
    let n = values.len();
    (0..n)
        .map(|j| {
            let s: C64 = values.iter().enumerate().map(|(k, f)| f * (PI * j as f64 * (k as f64 + 0.5) / n as f64).cos()).sum();
            s * (if j == 0 { 1.0 } else { 2.0 } / n as f64)
        })
        .collect()
}

fn clenshaw(coef: &[C64], x: f64) -> C64 {
    let (mut b1, mut b2) = (C64::new(0.0, 0.0), C64::new(0.0, 0.0));
    for c in coef.iter().skip(1).rev() {
        let b0 = c + b1 * (2.0 * x) - b2;
        b2 = b1;
        b1 = b0;
    }
    coef[0] + b1 * x - b2
}

/// K_{lambda0}(t, x, y) = (1/pi i) int e^{i t l^2} chi(l/lambda0) [l R_V(l)(x, y) + P0(x, y)/l] dl.
///
/// l R0 is integrated as is. The perturbation l h^3 r_x v A(l)^-1 v r_y, with the P0 pole
/// r_x(0) S2 r_y(0) / l removed, is smooth on the band and is interpolated once per pair.
#[derive(Debug, Clone)]
pub struct KernelEvaluator {
    pub cut: CutoffSpec,
    pub pairs: Vec<SamplePair>,
    coefficients: Vec<Vec<C64>>,
    /// Max interpolation error at the check nodes, relative to the largest node value.
    pub interpolation_residual: f64,
    pub max_oscillations: f64,
}

impl KernelEvaluator {
    pub fn new(td: &ThresholdData, lau: &LaurentExpansion, cut: &CutoffSpec, pairs: &[SamplePair], max_oscillations: f64) -> Result<Self> {
        if cut.lambda0 > td.lambda0 * (1.0 + 1e-12) {
            return Err(ScopeError::Config(format!("cutoff band {} exceeds the admissible lambda0 {}", cut.lambda0, td.lambda0)));
        }
        let fam = &td.family;
        let m = fam.dim();
        let n = CHEB_NODES;
        let nodes: Vec<f64> = (0..n).map(|k| (PI * (k as f64 + 0.5) / n as f64).cos()).collect();
        let checks: Vec<f64> = (1..16).map(|k| (PI * k as f64 / 16.0).cos()).collect();
        if m == 0 {
            let coefficients = vec![vec![C64::new(0.0, 0.0); n]; pairs.len()];
            return Ok(Self { cut: *cut, pairs: pairs.to_vec(), coefficients, interpolation_residual: 0.0, max_oscillations });
        }
        let (xs, ys, idx) = endpoints(pairs);
        let h = fam.grid.h;
        let w = fam.grid.weight();
        let side = |pts: &[[f64; 3]], l: f64| par_build(pts.len(), m, |i, p| free_kernel(l, h, &pts[i], &fam.points[p]) * fam.v[p]);
        let pole = if td.rank_s2() > 0 {
            let c2 = &lau.c_minus2;
            Some(side(&xs, 0.0) * c2 * side(&ys, 0.0).transpose())
        } else {
            None
        };
        let sample = |s: f64| -> Result<Vec<C64>> {
            let l = s * cut.lambda0;
            let core = side(&xs, l) * td.a_inverse(l)? * side(&ys, l).transpose();
            Ok(idx
                .iter()
                .map(|&(i, j)| {
                    let mut g = core[(i, j)] * (l * w);
                    if let Some(p) = &pole {
                        g -= p[(i, j)] * (w / l);
                    }
                    g
                })
                .collect())
        };
        let at_nodes = nodes.iter().map(|&s| sample(s)).collect::<Result<Vec<_>>>()?;
        let at_checks = checks.iter().map(|&s| sample(s)).collect::<Result<Vec<_>>>()?;
        let coefficients: Vec<Vec<C64>> = (0..pairs.len())
            .map(|i| chebyshev_coefficients(&at_nodes.iter().map(|v| v[i]).collect::<Vec<_>>()))
            .collect();
        let scale = at_nodes.iter().flatten().fold(0.0f64, |a, z| a.max(z.norm())).max(f64::MIN_POSITIVE);
        let mut worst = 0.0f64;
        for (s, vals) in checks.iter().zip(&at_checks) {
            for (c, v) in coefficients.iter().zip(vals) {
                worst = worst.max((clenshaw(c, *s) - v).norm() / scale);
            }
        }
        if worst > CHEB_TOLERANCE {
            return Err(ScopeError::Quadrature(format!("band interpolation residual {worst:e} exceeds {CHEB_TOLERANCE:e}")));
        }
        Ok(Self { cut: *cut, pairs: pairs.to_vec(), coefficients, interpolation_residual: worst, max_oscillations })
    }

    /// K_{lambda0}(t, x, y) at every pair.
    pub fn eval(&self, t: f64) -> Result<Vec<C64>> {
        if !(t > 0.0) || !t.is_finite() {
            return Err(ScopeError::Config(format!("K needs t > 0, got {t}")));
        }
        let l0 = self.cut.lambda0;
        let osc = t * l0 * l0 / (2.0 * PI);
        if osc > self.max_oscillations {
            return Err(ScopeError::Quadrature(format!("{osc:.0} oscillations exceed the budget of {}", self.max_oscillations)));
        }
        let panels = 40 + (4.0 * t * l0 * l0).ceil() as usize;
        let (ls, ws) = composite_rule(-l0, l0, panels, 20);
        let weights: Vec<C64> = ls.iter().zip(&ws).map(|(l, w)| C64::from_polar(w * self.cut.chi(*l), t * l * l)).collect();
        let pref = C64::new(0.0, -1.0 / PI);
        Ok(self
            .pairs
            .par_iter()
            .zip(&self.coefficients)
            .map(|(pr, coef)| {
                let d = dist(&pr.x, &pr.y);
                let sum: C64 = ls
                    .iter()
                    .zip(&weights)
                    .map(|(l, wt)| {
                        let free = if d > 0.0 {
                            C64::from_polar(l / (4.0 * PI * d), l * d)
                        } else {
                            // the odd l/d part cancels over the symmetric band
                            C64::new(0.0, l * l / (4.0 * PI))
                        };
                        wt * (free - clenshaw(coef, l / l0))
                    })
                    .sum();
                sum * pref
            })
            .collect())
    }
}

/// K_{lambda0} for V = 0 by a separate route: l e^{i l d} = -i d/dd e^{i l d}, so
/// K = -(1 / 4 pi^2 d) d/dd [C(t, d) / sqrt(t)], differentiated by a 5-point stencil.
pub fn free_band_kernel(cut: &CutoffSpec, t: f64, d: f64) -> C64 {
    let c = |a: f64| -> C64 {
        let (xs, ws) = gauss_legendre(40);
        let panels = 40 + (4.0 * t * cut.lambda0 * cut.lambda0).ceil() as usize;
        let step = 2.0 * cut.lambda0 / panels as f64;
        let mut acc = C64::new(0.0, 0.0);
        for p in 0..panels {
            let mid = -cut.lambda0 + (p as f64 + 0.5) * step;
            for (x, w) in xs.iter().zip(&ws) {
                let l = mid + 0.5 * step * x;
                acc += C64::from_polar(0.5 * step * w * cut.chi(l), t * l * l + l * a);
            }
        }
        acc
    };
    let e = 1e-3 * d.max(1.0);
    let deriv = (c(d - 2.0 * e) - c(d - e) * 8.0 + c(d + e) * 8.0 - c(d + 2.0 * e)) / (12.0 * e);
    -deriv / (4.0 * PI * PI * d)
}

#[derive(Debug, Clone, Serialize)]
pub struct TheoremRow {
    pub t: f64,
    pub d_t: f64,
    pub ft_sup: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TheoremCheck {
    pub class: Classification,
    pub rows: Vec<TheoremRow>,
    pub fit: LineFit,
    pub pairs: usize,
    pub interpolation_residual: f64,
}

/// D(t) = max over pairs |K_{lambda0}(t) - t^{-1/2} F_t| and its log-log slope.
/// For a regular threshold F_t = 0 and D is sup |K|.
pub fn theorem_check(td: &ThresholdData, lau: &LaurentExpansion, cut: &CutoffSpec, ts: &[f64], pairs: &[SamplePair]) -> Result<TheoremCheck> {
    if ts.len() < 2 {
        return Err(ScopeError::Config("theorem check needs at least two times".into()));
    }
    let k = KernelEvaluator::new(td, lau, cut, pairs, DEFAULT_MAX_OSCILLATIONS)?;
    let regular = td.classification() == Classification::Regular;
    let rows = ts
        .iter()
        .map(|&t| {
            let kv = k.eval(t)?;
            let fv = if regular { vec![C64::new(0.0, 0.0); pairs.len()] } else { compute_f_t(td, lau, cut, t, pairs)?.values };
            let d_t = kv.iter().zip(&fv).map(|(a, b)| (a - b / t.sqrt()).norm()).fold(0.0, f64::max);
            let ft_sup = fv.iter().map(|z| z.norm()).fold(0.0, f64::max);
            Ok(TheoremRow { t, d_t, ft_sup })
        })
        .collect::<Result<Vec<_>>>()?;
    let fit = fit_loglog(&rows.iter().map(|r| r.t).collect::<Vec<_>>(), &rows.iter().map(|r| r.d_t).collect::<Vec<_>>())
        .ok_or_else(|| ScopeError::NonFinite("residual table".into()))?;
    Ok(TheoremCheck { class: td.classification(), rows, fit, pairs: pairs.len(), interpolation_residual: k.interpolation_residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::birman::BirmanSchwingerFamily;
    use crate::grid::build_grid;
    use crate::potential::{split_potential, Potential};
    use crate::threshold::{compute_threshold_data, laurent_of_a_inverse, tune_grid_critical, ThresholdOptions};

    fn setup(pot: &Potential, grid: &Grid3) -> (ThresholdData, LaurentExpansion) {
        let fam = BirmanSchwingerFamily::new(&split_potential(pot, grid).unwrap()).unwrap();
        let td = compute_threshold_data(fam, &ThresholdOptions::default()).unwrap();
        let lau = laurent_of_a_inverse(&td).unwrap();
        (td, lau)
    }

    #[test]
    fn chebyshev_reproduces_polynomials() {
        let p = |x: f64| C64::new(1.0 - 3.0 * x + 0.5 * x.powi(5), x * x);
        let vals: Vec<C64> = (0..16).map(|k| p((PI * (k as f64 + 0.5) / 16.0).cos())).collect();
        let c = chebyshev_coefficients(&vals);
        for x in [-0.93, -0.2, 0.0, 0.41, 1.0] {
            assert!((clenshaw(&c, x) - p(x)).norm() < 1e-13);
        }
    }

    #[test]
    fn pairs_are_deterministic_distinct_corners() {
        let g = build_grid(8, 3.0).unwrap();
        let a = sample_pairs(&g, 20, 3).unwrap();
        assert_eq!(a, sample_pairs(&g, 20, 3).unwrap());
        assert_ne!(a, sample_pairs(&g, 20, 4).unwrap());
        for p in &a {
            assert_ne!(p.x, p.y);
            for c in p.x.iter().chain(&p.y) {
                let k = (c + g.l) / g.h;
                assert!((k - k.round()).abs() < 1e-12 && c.abs() <= g.l + 1e-12);
            }
        }
        let keys: Vec<f64> = a.iter().map(|p| norm3(&p.x) + norm3(&p.y)).collect();
        assert!(keys.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn gaussian_potential_limit() {
        let g = Gaussian { center: [0.3, -0.2, 0.1], sigma: 0.8 };
        for p in [[0.3, -0.2, 0.1], [1.0, 0.5, -0.4], [4.0, 0.0, 0.0]] {
            let lim = g.potential(&p, None);
            let far = g.potential(&p, Some(1e9));
            assert!((far - lim).norm() < 1e-6 * lim.norm(), "{far} {lim}");
        }
        // far away the Gaussian looks like a point mass
        let mass = (2.0 * PI).powf(1.5) * 0.8f64.powi(3);
        let p = [40.3, -0.2, 0.1];
        assert!((g.potential(&p, None).re * 40.0 / mass - 1.0).abs() < 1e-12);
    }

    #[test]
    fn free_band_kernel_two_routes() {
        let g = build_grid(8, 3.0).unwrap();
        let (td, lau) = setup(&Potential::square_well(0.0, 1.0), &g);
        assert_eq!(td.family.dim(), 0);
        let cut = CutoffSpec::new(td.lambda0).unwrap();
        let pairs = sample_pairs(&g, 6, 1).unwrap();
        let k = KernelEvaluator::new(&td, &lau, &cut, &pairs, 1e4).unwrap();
        for t in [5.0, 60.0] {
            let kv = k.eval(t).unwrap();
            for (pr, v) in pairs.iter().zip(&kv) {
                let other = free_band_kernel(&cut, t, dist(&pr.x, &pr.y));
                assert!((v - other).norm() < 1e-4 * v.norm().max(1e-8), "{v} {other}");
            }
        }
    }

    #[test]
    fn free_diagonal_decays_like_t_to_minus_three_halves() {
        let g = build_grid(8, 3.0).unwrap();
        let (td, lau) = setup(&Potential::square_well(0.0, 1.0), &g);
        let cut = CutoffSpec::new(td.lambda0).unwrap();
        let x = [0.75, 0.0, 0.0];
        let pairs = vec![SamplePair { x, y: x }];
        let k = KernelEvaluator::new(&td, &lau, &cut, &pairs, 1e4).unwrap();
        let ts: Vec<f64> = (0..8).map(|j| 500.0 * 2f64.powi(j)).collect();
        let ks: Vec<f64> = ts.iter().map(|&t| k.eval(t).unwrap()[0].norm()).collect();
        let fit = fit_loglog(&ts, &ks).unwrap();
        assert!((fit.slope + 1.5).abs() < 0.05, "{}", fit.slope);
    }

    #[test]
    fn kernel_is_symmetric_and_regular_has_no_singular_part() {
        let g = build_grid(8, 3.0).unwrap();
        let (td, lau) = setup(&Potential::square_well(1.0, 1.0), &g);
        assert_eq!(td.classification(), Classification::Regular);
        let cut = CutoffSpec::new(td.lambda0).unwrap();
        let pairs = sample_pairs(&g, 5, 2).unwrap();
        let swapped: Vec<SamplePair> = pairs.iter().map(|p| SamplePair { x: p.y, y: p.x }).collect();
        let a = KernelEvaluator::new(&td, &lau, &cut, &pairs, 1e4).unwrap().eval(80.0).unwrap();
        let b = KernelEvaluator::new(&td, &lau, &cut, &swapped, 1e4).unwrap().eval(80.0).unwrap();
        assert!(a.iter().zip(&b).all(|(u, w)| (u - w).norm() < 1e-10 * u.norm().max(1e-12)));
        assert!(matches!(compute_f_t(&td, &lau, &cut, 10.0, &pairs), Err(ScopeError::EmptySingularPart)));
        let k = KernelEvaluator::new(&td, &lau, &cut, &pairs, 1.0).unwrap();
        assert!(matches!(k.eval(1e6), Err(ScopeError::Quadrature(_))));
    }

    #[test]
    fn resonant_f_t_is_rank_one_with_a_weak_limit() {
        let g = build_grid(8, 3.0).unwrap();
        let shape = Potential::square_well(1.0, 1.2);
        let crit = tune_grid_critical(&shape, &g, (0.5, 4.0), 15).unwrap();
        let (td, lau) = setup(&shape.with_coupling(crit.coupling), &g);
        assert_eq!(td.classification(), Classification::ResonanceOnly);
        let cut = CutoffSpec::new(td.lambda0).unwrap();
        let pairs = sample_pairs(&g, 12, 5).unwrap();
        let ft = compute_f_t(&td, &lau, &cut, 100.0, &pairs).unwrap();
        assert!(ft.rank_one_residual.unwrap() < 1e-10);
        assert!(ft.values.iter().all(|z| z.is_finite()));
        let f = Gaussian { center: [0.5, 0.0, 0.0], sigma: 1.0 };
        let h = Gaussian { center: [0.0, -0.5, 0.5], sigma: 0.7 };
        let w6 = weak_pairing(&td, &lau, &cut, Some(1e6), &f, &h).unwrap();
        let w8 = weak_pairing(&td, &lau, &cut, Some(1e8), &f, &h).unwrap();
        let lim = weak_pairing(&td, &lau, &cut, None, &f, &h).unwrap();
        assert!(lim.norm() > 0.0 && w6.norm() > 0.5 * w8.norm());
        assert!((w8 - lim).norm() < 1e-2 * lim.norm());
    }
}
