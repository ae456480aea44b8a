//! Zero-energy radial shooting: the independent 1D oracle for every 3D grid result.

use crate::error::{Result, ScopeError};
use crate::potential::Potential;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShootingResult {
    pub ell: u32,
    pub r_max: f64,
    /// Coefficient of the growing free solution r^(ell+1).
    pub a: f64,
    /// Coefficient of the decaying free solution r^(-ell).
    pub b: f64,
    pub node_count: usize,
    /// Largest relative change of (a, b) when the ODE step is halved.
    pub step_sensitivity: f64,
}

fn integrate(pot: &Potential, ell: u32, steps_per_radius: f64) -> (f64, f64, usize) {
    let big_r = pot.support_radius;
    let l = ell as f64;
    let cent = l * (l + 1.0);
    let eps = 1e-6 * big_r;
    let h_ode = big_r / steps_per_radius;
    // evaluate from the inside so a jump at r = R is seen from the left
    let edge = big_r * (1.0 - 1e-13);
    let v = |r: f64| pot.radial_value(r.min(edge)).unwrap();
    let k = v(eps) / (2.0 * (2.0 * l + 3.0));
    let mut u = eps.powi(ell as i32 + 1) * (1.0 + k * eps * eps);
    let mut du = (l + 1.0) * eps.powi(ell as i32) + k * (l + 3.0) * eps.powi(ell as i32 + 2);
    let f = |r: f64, u: f64| (v(r) + cent / (r * r)) * u;
    let step = |r: f64, u: &mut f64, du: &mut f64, h: f64| {
        let k1u = *du;
        let k1v = f(r, *u);
        let k2u = *du + 0.5 * h * k1v;
        let k2v = f(r + 0.5 * h, *u + 0.5 * h * k1u);
        let k3u = *du + 0.5 * h * k2v;
        let k3v = f(r + 0.5 * h, *u + 0.5 * h * k2u);
        let k4u = *du + h * k3v;
        let k4v = f(r + h, *u + h * k3u);
        *u += h / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u);
        *du += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
    };
    // Near the origin the centrifugal term varies on the scale r itself, so the
    // fixed step only starts once it is a small fraction of r; before that the
    // step is 2e-3 r.
    let mut r = eps;
    let mut nodes = 0;
    while 2e-3 * r < h_ode {
        let h = 2e-3 * r;
        let prev = u;
        step(r, &mut u, &mut du, h);
        nodes += (prev * u < 0.0) as usize;
        r += h;
    }
    // mesh nodes land on every kink of the profile so RK4 keeps its order
    let mut stops: Vec<f64> = pot.breakpoints().into_iter().filter(|&b| b > r && b < big_r).collect();
    stops.push(big_r);
    for stop in stops {
        let n = ((stop - r) / h_ode).round().max(1.0) as usize;
        let h = (stop - r) / n as f64;
        let r0 = r;
        for i in 0..n {
            let prev = u;
            step(r0 + i as f64 * h, &mut u, &mut du, h);
            nodes += (prev * u < 0.0) as usize;
        }
        r = stop;
    }
    (u, du, nodes)
}

fn match_free(ell: u32, big_r: f64, u: f64, du: f64) -> (f64, f64) {
    // u = a r^(l+1) + b r^(-l),  u' = (l+1) a r^l - l b r^(-l-1)
    let l = ell as f64;
    let m11 = big_r.powf(l + 1.0);
    let m12 = big_r.powf(-l);
    let m21 = (l + 1.0) * big_r.powf(l);
    let m22 = -l * big_r.powf(-l - 1.0);
    let det = m11 * m22 - m12 * m21;
    ((u * m22 - m12 * du) / det, (m11 * du - m21 * u) / det)
}

pub fn shoot_zero_energy(pot: &Potential, ell: u32) -> Result<ShootingResult> {
    if !pot.is_radial() {
        return Err(ScopeError::Config("shooting requires a radial potential".into()));
    }
    if !(pot.support_radius > 0.0 && pot.support_radius.is_finite()) {
        return Err(ScopeError::Config("shooting requires a finite support radius".into()));
    }
    let big_r = pot.support_radius;
    let (u, du, nodes) = integrate(pot, ell, 1e4);
    let (a, b) = match_free(ell, big_r, u, du);
    let (u2, du2, _) = integrate(pot, ell, 2e4);
    let (a2, b2) = match_free(ell, big_r, u2, du2);
    let scale = a.abs().max(b.abs());
    let step_sensitivity = (a - a2).abs().max((b - b2).abs()) / scale;
    Ok(ShootingResult { ell, r_max: big_r, a: a2, b: b2, node_count: nodes, step_sensitivity })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TuneResult {
    pub c_star: f64,
    pub residual_a: f64,
    pub iterations: usize,
    pub shooting: ShootingResult,
}

/// Bisection on the growing-solution coefficient a(c) of c * shape.
pub fn tune_coupling(shape: &Potential, ell: u32, bracket: (f64, f64)) -> Result<TuneResult> {
    let a_of = |c: f64| shoot_zero_energy(&shape.with_coupling(c), ell).map(|s| s.a);
    let (mut lo, mut hi) = bracket;
    let mut alo = a_of(lo)?;
    let ahi = a_of(hi)?;
    if !(alo * ahi < 0.0) {
        return Err(ScopeError::Config(format!("bracket ({lo}, {hi}) does not straddle a sign change of a: {alo:e}, {ahi:e}")));
    }
    let mut iterations = 0;
    loop {
        let mid = 0.5 * (lo + hi);
        let am = a_of(mid)?;
        iterations += 1;
        if am.abs() < 1e-10 || hi - lo < 4.0 * f64::EPSILON * mid.abs() || iterations > 200 {
            let shooting = shoot_zero_energy(&shape.with_coupling(mid), ell)?;
            return Ok(TuneResult { c_star: mid, residual_a: am, iterations, shooting });
        }
        if (am < 0.0) == (alo < 0.0) {
            lo = mid;
            alo = am;
        } else {
            hi = mid;
        }
    }
}

/// Shooting coefficients over a list of couplings, evaluated in parallel.
pub fn scan_coupling(shape: &Potential, ell: u32, couplings: &[f64]) -> Result<Vec<ShootingResult>> {
    use rayon::prelude::*;
    couplings.par_iter().map(|&c| shoot_zero_energy(&shape.with_coupling(c), ell)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::{make_eigen_potential, make_resonant_potential};
    use std::f64::consts::PI;

    #[test]
    fn free_solution_is_exact() {
        let s = shoot_zero_energy(&Potential::square_well(0.0, 1.0), 0).unwrap();
        assert!((s.a - 1.0).abs() < 1e-12 && s.b.abs() < 1e-12, "{s:?}");
        let s = shoot_zero_energy(&Potential::square_well(0.0, 1.3), 2).unwrap();
        assert!((s.a - 1.0).abs() < 1e-9 && s.b.abs() < 1e-9, "{s:?}");
    }

    #[test]
    fn square_well_matches_analytic_interior() {
        // inside u = sin(k r)/k, so a = cos k, b = sin k/k - cos k
        let c: f64 = 1.7;
        let s = shoot_zero_energy(&Potential::square_well(c, 1.0), 0).unwrap();
        let k = c.sqrt();
        assert!((s.a - k.cos()).abs() < 1e-10);
        assert!((s.b - (k.sin() / k - k.cos())).abs() < 1e-10);
        assert!(s.step_sensitivity < 1e-10);
    }

    #[test]
    fn tune_finds_both_square_well_thresholds() {
        let w = Potential::square_well(1.0, 1.0);
        let t = tune_coupling(&w, 0, (1.0, 4.0)).unwrap();
        assert!((t.c_star - PI * PI / 4.0).abs() < 1e-6, "{}", t.c_star);
        let t = tune_coupling(&w, 0, (15.0, 25.0)).unwrap();
        assert!((t.c_star - 9.0 * PI * PI / 4.0).abs() < 1e-4, "{}", t.c_star);
        assert_eq!(t.shooting.node_count, 1);
        assert!(tune_coupling(&w, 0, (3.0, 4.0)).is_err());
    }

    #[test]
    fn planted_solutions_have_no_growing_part() {
        let s = shoot_zero_energy(&make_resonant_potential(2.0).unwrap(), 0).unwrap();
        assert!(s.a.abs() < 1e-8 && (s.b - 1.0).abs() < 1e-8, "{s:?}");
        let s = shoot_zero_energy(&make_eigen_potential(2.5).unwrap(), 1).unwrap();
        assert!(s.a.abs() < 1e-8, "{s:?}");
    }

    #[test]
    fn smooth_well_first_threshold() {
        // the first threshold of -(1-(r/R)^2)^3 sits at c R^2 = 10.474263...
        let w = Potential::smooth_well(1.0, 2.0);
        let t = tune_coupling(&w, 0, (1.0, 4.0)).unwrap();
        assert!((t.c_star * 4.0 - 10.474263).abs() < 1e-5, "{}", t.c_star * 4.0);
        let scan = scan_coupling(&w, 0, &[0.5, 1.0, 1.5, 2.0, 2.5]).unwrap();
        assert!(scan.iter().all(|s| s.a > 0.0), "no earlier sign change");
    }

    #[test]
    fn scaling_covariance() {
        // s^2 V(s r) has its threshold at s^2 times the original coupling
        let t1 = tune_coupling(&Potential::smooth_well(1.0, 2.0), 0, (1.0, 4.0)).unwrap();
        let t2 = tune_coupling(&Potential::smooth_well(1.0, 1.0), 0, (4.0, 16.0)).unwrap();
        assert!((t2.c_star - 4.0 * t1.c_star).abs() < 1e-8 * t2.c_star);
    }
}
