//! The spectral cutoff chi_{lambda0} and the scalar oscillatory integrals built on it.

use crate::error::{Result, ScopeError};
use crate::fit::fit_loglog;
use crate::quad::composite_rule;
use num_complex::Complex64 as C64;
use std::f64::consts::PI;

/// e^{-1/x} and its first two derivatives, zero for x <= 0.
fn flat(x: f64) -> [f64; 3] {
    if x <= 0.0 {
        return [0.0; 3];
    }
    let f = (-1.0 / x).exp();
    let x2 = x * x;
    [f, f / x2, f * (1.0 / (x2 * x2) - 2.0 / (x2 * x))]
}

/// Even C-infinity bump: 1 on |s| <= 1/2, 0 on |s| >= 1, with derivatives in s.
pub fn profile(s: f64) -> [f64; 3] {
    let a = s.abs();
    if a <= 0.5 {
        return [1.0, 0.0, 0.0];
    }
    if a >= 1.0 {
        return [0.0; 3];
    }
    let z = 2.0 * a - 1.0;
    let [p, dp, ddp] = flat(1.0 - z);
    let [q, dq, ddq] = flat(z);
    // chi = p/(p+q) as a function of z, with p' = -dp and q' = dq
    let sum = p + q;
    let num = -dp * q - p * dq;
    let dnum = ddp * q - dp * dq + dp * dq - p * ddq;
    let dsum = -dp + dq;
    let chi = p / sum;
    let d1 = num / (sum * sum);
    let d2 = (dnum * sum - 2.0 * num * dsum) / (sum * sum * sum);
    // dz/ds = 2 sign(s)
    let sg = s.signum();
    [chi, 2.0 * sg * d1, 4.0 * d2]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutoffSpec {
    pub lambda0: f64,
}

impl CutoffSpec {
    pub fn new(lambda0: f64) -> Result<Self> {
        if !(lambda0 > 0.0) || !lambda0.is_finite() {
            return Err(ScopeError::Config(format!("cutoff radius must be positive, got {lambda0}")));
        }
        Ok(Self { lambda0 })
    }

    /// chi(lambda / lambda0).
    pub fn chi(&self, lambda: f64) -> f64 {
        profile(lambda / self.lambda0)[0]
    }

    /// chi_{lambda0} and its first two lambda-derivatives.
    pub fn eval(&self, lambda: f64) -> [f64; 3] {
        let [c, d1, d2] = profile(lambda / self.lambda0);
        [c, d1 / self.lambda0, d2 / (self.lambda0 * self.lambda0)]
    }
}

/// Gauss order used on every oscillation-sized panel.
const PANEL_ORDER: usize = 12;

/// sqrt(t) int e^{i t l^2 + i l a} chi(l/lambda0) dl over the real line.
///
/// In mu = sqrt(t) l the phase is mu^2 + mu a/sqrt(t). Near the origin the
/// integrand is smooth in mu; further out panels are laid uniformly in w = mu^2
/// so each spans about half an oscillation. The plateau edge and the support
/// edge are panel breakpoints, and the transition always gets a minimum panel count.
fn scaled_integral(cut: &CutoffSpec, t: f64, a: f64, refine: usize) -> C64 {
    let m = cut.lambda0 * t.sqrt();
    let b = a / t.sqrt();
    let f = |mu: f64| C64::from_polar(profile(mu / m)[0], mu * mu + mu * b);
    let pair = |mu: f64| f(mu) + f(-mu);
    let inner = 2.0 * (2.0 * PI).sqrt() + b.abs();
    let mut cuts = vec![0.0, 0.5 * m, m];
    if inner < m {
        cuts.push(inner);
        cuts.sort_by(f64::total_cmp);
    }
    let mut total = C64::new(0.0, 0.0);
    for seg in cuts.windows(2) {
        let (lo, hi) = (seg[0], seg[1]);
        let min_panels = if lo >= 0.5 * m { 48 } else { 8 };
        if hi <= inner {
            let panels = min_panels.max((hi * hi / PI).ceil() as usize) * refine;
            let (xs, ws) = composite_rule(lo, hi, panels, PANEL_ORDER);
            total += xs.iter().zip(&ws).map(|(x, w)| pair(*x) * *w).sum::<C64>();
        } else {
            let (w0, w1) = (lo * lo, hi * hi);
            let panels = min_panels.max(((w1 - w0) / PI).ceil() as usize) * refine;
            let (xs, ws) = composite_rule(w0, w1, panels, PANEL_ORDER);
            total += xs.iter().zip(&ws).map(|(w, wt)| {
                let mu = w.sqrt();
                pair(mu) * (*wt / (2.0 * mu))
            }).sum::<C64>();
        }
    }
    total
}

/// h(t) = sqrt(t) int e^{i t l^2} chi_{lambda0}(l) dl, tending to sqrt(pi) e^{i pi/4} as t grows.
///
/// By Parseval this is the Fourier-side expression (e^{i pi/4} / (2 sqrt(pi))) int e^{-i u^2/4t} chi^(u) du
/// with chi^(u) = int chi(l) e^{-i l u} dl.
pub fn compute_h_of_t(cut: &CutoffSpec, t: f64) -> Result<C64> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(ScopeError::Config(format!("h(t) needs t > 0, got {t}")));
    }
    let coarse = scaled_integral(cut, t, 0.0, 1);
    let fine = scaled_integral(cut, t, 0.0, 2);
    if (coarse - fine).norm() > 1e-8 * fine.norm().max(1.0) {
        return Err(ScopeError::Quadrature(format!("h({t}) refinements differ by {:e}", (coarse - fine).norm())));
    }
    Ok(fine)
}

/// The t -> infinity limit of h(t) under this convention.
pub fn h_limit() -> C64 {
    C64::from_polar(PI.sqrt(), PI / 4.0)
}

/// C(t, a) = sqrt(t) int e^{i t l^2 + i l a} chi dl, which splits as C1 + C2 with C1 = e^{-i a^2/4t} h(t).
pub fn c_split(cut: &CutoffSpec, t: f64, a: f64) -> Result<(C64, C64)> {
    let h = compute_h_of_t(cut, t)?;
    let c = scaled_integral(cut, t, a, 2);
    let c1 = C64::from_polar(1.0, -a * a / (4.0 * t)) * h;
    Ok((c1, c - c1))
}

#[derive(Debug, Clone)]
pub struct C2Check {
    /// max over the lattice of |C2| t / |a|.
    pub constant: f64,
    /// Log-log slope in t of max_a |C2(t, a)| / |a|; -1 for the claimed rate.
    pub slope: f64,
}

/// |C2(t, a)| <= c |a| / t on a (t, a) lattice.
pub fn c2_bound_check(cut: &CutoffSpec, ts: &[f64], as_: &[f64]) -> Result<C2Check> {
    let mut constant = 0.0f64;
    let mut worst = Vec::with_capacity(ts.len());
    for &t in ts {
        let mut m = 0.0f64;
        for &a in as_ {
            let (_, c2) = c_split(cut, t, a)?;
            m = m.max(c2.norm() / a.abs());
        }
        constant = constant.max(m * t);
        worst.push(m);
    }
    let slope = fit_loglog(ts, &worst).map(|f| f.slope).unwrap_or(f64::NAN);
    Ok(C2Check { constant, slope })
}
