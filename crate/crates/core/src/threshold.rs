//! The two-level hierarchy at lambda = 0.
//!
//! Level one reduces A(lambda) on S1 = ker A0 to m(lambda) = m0 + lambda m1(lambda);
//! level two reduces m on S2 = ker m0 to b(lambda). Frames are kept in coordinates:
//! S1 as columns over the support, S2 as columns over the S1 frame.

use crate::birman::BirmanSchwingerFamily;
use crate::error::{Result, ScopeError};
use crate::fit::{fit_loglog, LineFit};
use crate::grid::{kernel_apply, kernel_entry, Grid3, GridFunction, KernelKind};
use crate::inversion::{checked_inverse, kernel_projection, reduce, schur, Margins, OperatorFamily, Projection};
use crate::linalg::{frobenius, hermitian_eig, hermitian_part, inverse, par_build, CMat};
use crate::potential::{split_potential, Potential};
use faer::{Mat, Scale};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::PI;

/// eps_rank relative to the largest |eigenvalue| of the operator being split.
pub const EPS_RANK_REL: f64 = 1e-9;
pub const GAP_FACTOR: f64 = 100.0;
/// Smallest lambda the certified radius may shrink to.
pub const LAMBDA_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdOptions {
    pub eps_rank: Option<f64>,
    pub gap_factor: f64,
    pub lambda0: Option<f64>,
}

impl Default for ThresholdOptions {
    fn default() -> Self {
        Self { eps_rank: None, gap_factor: GAP_FACTOR, lambda0: None }
    }
}

/// m(lambda) on range(S1) as an operator family with a0 = m0 and a1 = m1.
pub struct MLevel<'a> {
    family: &'a BirmanSchwingerFamily,
    frame: &'a CMat,
    m0: &'a CMat,
}

impl OperatorFamily for MLevel<'_> {
    fn dim(&self) -> usize {
        self.frame.ncols()
    }

    fn a0(&self) -> &CMat {
        self.m0
    }

    /// m1 = F*A2 F - F*A1 G A1 F with G = (A + S1)^-1, using A0 F = 0.
    fn a1(&self, lambda: f64) -> CMat {
        let fam = self.family;
        let f = self.frame;
        let a1 = fam.a1(lambda);
        let gamma = inverse(&(fam.a(lambda) + f * f.adjoint()));
        f.adjoint() * fam.a2(lambda) * f - f.adjoint() * &a1 * gamma * &a1 * f
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Regular,
    ResonanceOnly,
    EigenvalueOnly,
    ResonanceAndEigenvalue,
}

impl Classification {
    pub fn from_ranks(rank_s1: usize, rank_s2: usize) -> Self {
        match (rank_s1, rank_s2) {
            (0, _) => Self::Regular,
            (r1, 0) if r1 > 0 => Self::ResonanceOnly,
            (r1, r2) if r1 > r2 => Self::ResonanceAndEigenvalue,
            _ => Self::EigenvalueOnly,
        }
    }

    pub fn has_resonance(self) -> bool {
        matches!(self, Self::ResonanceOnly | Self::ResonanceAndEigenvalue)
    }

    pub fn has_eigenvalue(self) -> bool {
        matches!(self, Self::EigenvalueOnly | Self::ResonanceAndEigenvalue)
    }
}

#[derive(Debug, Clone)]
pub struct ThresholdData {
    pub family: BirmanSchwingerFamily,
    pub eps_rank: f64,
    pub gap_factor: f64,
    pub s1: Projection,
    pub margins: Margins,
    pub m0: CMat,
    pub eps_rank2: f64,
    /// Frame of S2 in S1-frame coordinates.
    pub s2: Projection,
    pub margins2: Margins,
    /// b(0) = -S2 v G2 v S2 in S2-frame coordinates.
    pub b0: CMat,
    pub lambda0: f64,
}

/// Classification report as written by the CLI.
#[derive(Debug, Clone, Serialize)]
pub struct ThresholdReport {
    pub rank_s1: usize,
    pub rank_s2: usize,
    pub class: Classification,
    pub eps_rank: f64,
    pub margins: ReportMargins,
    pub lambda0: f64,
    pub b0_min_eigenvalue: Option<f64>,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ReportMargins {
    pub kept: f64,
    /// Absent when nothing was discarded.
    pub discarded: Option<f64>,
}

/// The kernel decisions treat the kept eigenvalues (all below eps_rank) as zero; A0 and
/// m0 are deflated accordingly so every level of the reduction sees an exact kernel.
pub fn compute_threshold_data(mut family: BirmanSchwingerFamily, opts: &ThresholdOptions) -> Result<ThresholdData> {
    let m = family.dim();
    let top = if m == 0 { 0.0 } else { hermitian_eig(&family.a0).0.iter().fold(0.0f64, |a, e| a.max(e.abs())) };
    let eps_rank = opts.eps_rank.unwrap_or(EPS_RANK_REL * top);
    if !(eps_rank >= 0.0) || !eps_rank.is_finite() {
        return Err(ScopeError::Config(format!("eps_rank must be finite and non-negative, got {eps_rank}")));
    }
    let k1 = kernel_projection(&family.a0, eps_rank, opts.gap_factor)?;
    let mut s1 = k1.projection;
    family.deflate(&s1.frame, &k1.kept_eigenvalues);
    s1.exact = true;
    let mut m0 = s1.frame.adjoint() * family.a1(0.0) * &s1.frame;
    // m0 = i alpha/(4 pi) F* P_v F, so -i m0 is positive semidefinite with norm <= alpha/(4 pi)
    let eps_rank2 = EPS_RANK_REL * family.alpha() / (4.0 * PI);
    let minus_i_m0 = hermitian_part(&(&m0 * Scale(C64::new(0.0, -1.0))));
    let k2 = kernel_projection(&minus_i_m0, eps_rank2, opts.gap_factor)?;
    let mut s2 = k2.projection;
    for (j, mu) in k2.kept_eigenvalues.iter().enumerate() {
        let col = s2.frame.col(j).to_owned();
        m0 -= &col * col.adjoint() * Scale(C64::new(0.0, *mu));
    }
    s2.exact = true;
    let b0 = {
        let f12 = &s1.frame * &s2.frame;
        hermitian_part(&(f12.adjoint() * family.a2(0.0) * &f12))
    };
    let mut td = ThresholdData {
        family,
        eps_rank,
        gap_factor: opts.gap_factor,
        s1,
        margins: k1.margins,
        m0,
        eps_rank2,
        s2,
        margins2: k2.margins,
        b0,
        lambda0: 0.0,
    };
    td.lambda0 = match opts.lambda0 {
        Some(l) if l > 0.0 && l.is_finite() => {
            td.admissible(l)?;
            l
        }
        Some(l) => return Err(ScopeError::Config(format!("lambda0 must be positive, got {l}"))),
        None => td.select_lambda0()?,
    };
    Ok(td)
}

impl ThresholdData {
    pub fn rank_s1(&self) -> usize {
        self.s1.dim()
    }

    pub fn rank_s2(&self) -> usize {
        self.s2.dim()
    }

    pub fn classification(&self) -> Classification {
        Classification::from_ranks(self.rank_s1(), self.rank_s2())
    }

    pub fn m_level(&self) -> MLevel<'_> {
        MLevel { family: &self.family, frame: &self.s1.frame, m0: &self.m0 }
    }

    /// S2 frame over the support.
    pub fn s2_support_frame(&self) -> CMat {
        &self.s1.frame * &self.s2.frame
    }

    pub fn m_at(&self, lambda: f64) -> Result<CMat> {
        Ok(schur(&self.family, &self.s1, lambda)?.b)
    }

    pub fn b_at(&self, lambda: f64) -> Result<CMat> {
        Ok(schur(&self.m_level(), &self.s2, lambda)?.b)
    }

    /// (A(lambda) + S1)^-1.
    pub fn gamma1_at(&self, lambda: f64) -> Result<CMat> {
        let f = &self.s1.frame;
        checked_inverse(&(self.family.a(lambda) + f * f.adjoint()))
    }

    /// (m(lambda) + S2)^-1 on range(S1).
    pub fn gamma2_at(&self, lambda: f64) -> Result<CMat> {
        let f = &self.s2.frame;
        checked_inverse(&(self.m_at(lambda)? + f * f.adjoint()))
    }

    /// Smallest eigenvalue of b0 (positive when b0 is definite).
    pub fn b0_min_eigenvalue(&self) -> Option<f64> {
        if self.rank_s2() == 0 {
            return None;
        }
        hermitian_eig(&self.b0).0.first().copied()
    }

    pub fn report(&self) -> ThresholdReport {
        ThresholdReport {
            rank_s1: self.rank_s1(),
            rank_s2: self.rank_s2(),
            class: self.classification(),
            eps_rank: self.eps_rank,
            margins: ReportMargins {
                kept: self.margins.kept,
                discarded: self.margins.discarded.is_finite().then_some(self.margins.discarded),
            },
            lambda0: self.lambda0,
            b0_min_eigenvalue: self.b0_min_eigenvalue(),
        }
    }

    /// A(lambda)^-1 on the support through the hierarchy.
    pub fn a_inverse(&self, lambda: f64) -> Result<CMat> {
        if self.rank_s1() == 0 {
            return checked_inverse(&self.family.a(lambda));
        }
        if self.rank_s2() == 0 {
            return Ok(reduce(&self.family, &self.s1, lambda)?.inverse());
        }
        let level1 = schur(&self.family, &self.s1, lambda)?;
        let m_inv = reduce(&self.m_level(), &self.s2, lambda)?.inverse();
        Ok(&level1.gamma + &level1.gamma_f * m_inv * &level1.f_gamma * Scale(C64::new(1.0 / lambda, 0.0)))
    }

    /// Conditioning checks of every level at one lambda.
    pub fn admissible(&self, lambda: f64) -> Result<()> {
        if self.rank_s1() == 0 {
            return checked_inverse(&self.family.a(lambda)).map(|_| ());
        }
        let m = schur(&self.family, &self.s1, lambda)?.b;
        if self.rank_s2() == 0 {
            return checked_inverse(&m).map(|_| ());
        }
        let f = &self.s2.frame;
        checked_inverse(&(&m + f * f.adjoint()))?;
        reduce(&self.m_level(), &self.s2, lambda).map(|_| ())
    }

    /// Largest dyadic radius below which every dyadic lambda down to the floor passes.
    fn select_lambda0(&self) -> Result<f64> {
        let mut lambdas = vec![self.family.lambda_band];
        while lambdas.last().unwrap() / 2.0 >= LAMBDA_FLOOR {
            lambdas.push(lambdas.last().unwrap() / 2.0);
        }
        let ok: Vec<bool> = lambdas.par_iter().map(|&l| self.admissible(l).is_ok()).collect();
        let mut lambda0 = None;
        for (l, pass) in lambdas.iter().zip(&ok).rev() {
            if !pass {
                break;
            }
            lambda0 = Some(*l);
        }
        lambda0.ok_or_else(|| ScopeError::ConditioningFailure {
            floor: *lambdas.last().unwrap(),
            detail: "the reduced operators fail the conditioning check at the smallest sampled lambda".into(),
        })
    }
}

/// g = -G0 v f on the full grid, the zero-energy solution carried by f in range(S1).
pub fn resonance_function(td: &ThresholdData, f: &[C64]) -> Result<GridFunction> {
    let fam = &td.family;
    if f.len() != fam.dim() {
        return Err(ScopeError::Config(format!("vector of length {} for a support of {}", f.len(), fam.dim())));
    }
    let x = Mat::from_fn(f.len(), 1, |i, _| f[i]);
    let fx = td.s1.frame.adjoint() * &x;
    let off = frobenius(&(&x - &td.s1.frame * &fx));
    if off > 1e-8 * frobenius(&x).max(f64::MIN_POSITIVE) {
        return Err(ScopeError::Config(format!("vector is not in range(S1): off-range part {off:e}")));
    }
    let grid = fam.grid;
    let charge: Vec<C64> = f.iter().zip(&fam.v).map(|(a, v)| -a * *v).collect();
    let values = kernel_apply(KernelKind::Gj(0), grid.h, &grid.points(), &fam.points, &charge);
    GridFunction::new(grid, values)
}

/// Zero-energy eigenprojection in factored form P0 = sum phi_i (A^-1)_ij <phi_j, .>.
#[derive(Debug, Clone)]
pub struct EigenProjection {
    /// psi_j, columns over the support.
    pub psi: CMat,
    /// phi_j = -G0 v psi_j.
    pub phis: Vec<GridFunction>,
    /// A_ij = <phi_i, phi_j> = h^3 b0, from the b(0) identity.
    pub gram: CMat,
    pub gram_inv: CMat,
}

impl EigenProjection {
    pub fn rank(&self) -> usize {
        self.phis.len()
    }

    /// Coefficients <phi_j, f>.
    pub fn pairings(&self, f: &GridFunction) -> Vec<C64> {
        self.phis.iter().map(|p| p.inner(f)).collect()
    }

    pub fn apply(&self, f: &GridFunction) -> GridFunction {
        let c = self.pairings(f);
        let grid = f.grid;
        let coef: Vec<C64> = (0..self.rank()).map(|i| (0..self.rank()).map(|j| self.gram_inv[(i, j)] * c[j]).sum()).collect();
        let values = (0..grid.len()).map(|p| self.phis.iter().zip(&coef).map(|(phi, a)| phi.values[p] * a).sum()).collect();
        GridFunction { grid, values }
    }

    /// Dense matrix of P0 acting on grid vectors (the h^3 weight folded in).
    pub fn matrix(&self) -> CMat {
        let grid = self.phis[0].grid;
        let phi = Mat::from_fn(grid.len(), self.rank(), |p, j| self.phis[j].values[p]);
        &phi * &self.gram_inv * phi.adjoint() * Scale(C64::new(grid.weight(), 0.0))
    }

    /// Point charges h^3 v psi_j generating phi_j, one column each.
    pub fn charges(&self, td: &ThresholdData) -> CMat {
        let fam = &td.family;
        let w = fam.grid.weight();
        Mat::from_fn(fam.dim(), self.rank(), |a, j| self.psi[(a, j)] * (-fam.v[a] * w))
    }
}

pub fn compute_p0(td: &ThresholdData) -> Result<EigenProjection> {
    if td.rank_s2() == 0 {
        return Err(ScopeError::EmptyEigenspace);
    }
    let fam = &td.family;
    let psi = td.s2_support_frame();
    let phis = (0..psi.ncols())
        .map(|j| {
            let col: Vec<C64> = (0..psi.nrows()).map(|i| psi[(i, j)]).collect();
            resonance_function(td, &col)
        })
        .collect::<Result<Vec<_>>>()?;
    let gram = &td.b0 * Scale(C64::new(fam.grid.weight(), 0.0));
    let gram_inv = checked_inverse(&gram)?;
    Ok(EigenProjection { psi, phis, gram, gram_inv })
}

#[derive(Debug, Clone)]
pub struct LaurentExpansion {
    pub c_minus2: CMat,
    pub c_minus1: CMat,
    pub radius: f64,
}

/// Step for the Richardson estimate of c_-1 when S2 is nontrivial.
const LAURENT_STEP: f64 = 1e-3;

pub fn laurent_of_a_inverse(td: &ThresholdData) -> Result<LaurentExpansion> {
    let m = td.family.dim();
    let zero = || Mat::<C64>::zeros(m, m);
    if td.rank_s1() == 0 {
        return Ok(LaurentExpansion { c_minus2: zero(), c_minus1: zero(), radius: td.lambda0 });
    }
    let f1 = &td.s1.frame;
    if td.rank_s2() == 0 {
        let c1 = f1 * checked_inverse(&td.m0)? * f1.adjoint();
        return Ok(LaurentExpansion { c_minus2: zero(), c_minus1: c1, radius: td.lambda0 });
    }
    let f12 = td.s2_support_frame();
    let c2 = &f12 * checked_inverse(&td.b0)? * f12.adjoint();
    // c_-1 = d/dl [l^2 A(l)^-1] at 0, by Richardson-extrapolated central differences
    let delta = LAURENT_STEP.min(0.5 * td.lambda0);
    let central = |d: f64| -> Result<CMat> {
        let p = td.a_inverse(d)? * Scale(C64::new(d * d, 0.0));
        let q = td.a_inverse(-d)? * Scale(C64::new(d * d, 0.0));
        Ok((p - q) * Scale(C64::new(0.5 / d, 0.0)))
    };
    let coarse = central(delta)?;
    let fine = central(0.5 * delta)?;
    let c1 = (fine * Scale(C64::new(4.0, 0.0)) - coarse) * Scale(C64::new(1.0 / 3.0, 0.0));
    Ok(LaurentExpansion { c_minus2: c2, c_minus1: c1, radius: td.lambda0 })
}

impl LaurentExpansion {
    pub fn singular_part(&self, lambda: f64) -> CMat {
        &self.c_minus2 * Scale(C64::new(1.0 / (lambda * lambda), 0.0)) + &self.c_minus1 * Scale(C64::new(1.0 / lambda, 0.0))
    }

    /// E(lambda) = A(lambda)^-1 - c_-2 / lambda^2 - c_-1 / lambda.
    pub fn regular_at(&self, td: &ThresholdData, lambda: f64) -> Result<CMat> {
        Ok(td.a_inverse(lambda)? - self.singular_part(lambda))
    }
}

/// R0+(lambda)(x, y) as a kernel value, with the cell average at coincident points.
pub fn free_kernel(lambda: f64, h: f64, x: &[f64; 3], y: &[f64; 3]) -> C64 {
    let r = crate::grid::dist(x, y);
    kernel_entry(KernelKind::FreeResolventPlus(lambda), h, if r < 1e-12 * h { 0.0 } else { r }) / (h * h * h)
}

/// Kernel values R_V+(lambda^2)(x, y) = R0 - R0 v A(lambda)^-1 v R0 at arbitrary points.
/// Coincident points use the cell average of R0.
pub fn assemble_rv_plus(td: &ThresholdData, lambda: f64, xs: &[[f64; 3]], ys: &[[f64; 3]]) -> Result<CMat> {
    let fam = &td.family;
    let h = fam.grid.h;
    let r0 = par_build(xs.len(), ys.len(), |i, j| free_kernel(lambda, h, &xs[i], &ys[j]));
    if fam.dim() == 0 {
        return Ok(r0);
    }
    let t = td.a_inverse(lambda)?;
    let w = fam.grid.weight();
    let rx = par_build(xs.len(), fam.dim(), |i, p| free_kernel(lambda, h, &xs[i], &fam.points[p]) * fam.v[p]);
    let ry = par_build(fam.dim(), ys.len(), |p, j| free_kernel(lambda, h, &fam.points[p], &ys[j]) * fam.v[p]);
    Ok(r0 - rx * t * ry * Scale(C64::new(w, 0.0)))
}

#[derive(Debug, Clone, Serialize)]
pub struct JumpFit {
    pub fit: LineFit,
    pub energies: Vec<f64>,
    pub hs_norms: Vec<f64>,
}

/// Log-log fit of the Hilbert-Schmidt norm (over the grid box) of R_V+(E) - R_V-(E).
///
/// The -P0/E pole of an eigenvalue has equal boundary values from both sides, so it
/// is absent from the difference and nothing further needs subtracting for E > 0.
pub fn spectral_jump_exponent(td: &ThresholdData, energies: &[f64]) -> Result<JumpFit> {
    let usable: Vec<f64> = energies.iter().copied().filter(|e| *e > 0.0 && e.sqrt() < td.lambda0).collect();
    if usable.len() < 4 {
        return Err(ScopeError::Config(format!("{} usable energies below lambda0^2 = {:e}; need 4", usable.len(), td.lambda0.powi(2))));
    }
    let pts = td.family.grid.points();
    let w = td.family.grid.weight();
    let norms = usable
        .iter()
        .map(|&e| {
            let l = e.sqrt();
            let jump = assemble_rv_plus(td, l, &pts, &pts)? - assemble_rv_plus(td, -l, &pts, &pts)?;
            Ok(frobenius(&jump) * w)
        })
        .collect::<Result<Vec<f64>>>()?;
    let fit = fit_loglog(&usable, &norms).ok_or_else(|| ScopeError::NonFinite("jump norms".into()))?;
    Ok(JumpFit { fit, energies: usable, hs_norms: norms })
}

/// Signed eigenvalue of A0 closest to zero.
pub fn nearest_zero_eigenvalue(pot: &Potential, grid: &Grid3) -> Result<f64> {
    let fam = BirmanSchwingerFamily::new(&split_potential(pot, grid)?)?;
    if fam.dim() == 0 {
        return Ok(1.0);
    }
    let ev = hermitian_eig(&fam.a0).0;
    Ok(ev.into_iter().fold(f64::INFINITY, |a, e| if e.abs() < a.abs() { e } else { a }))
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct GridCritical {
    pub coupling: f64,
    pub eigenvalue: f64,
    pub iterations: usize,
}

/// Coupling at which the grid operator A0 becomes singular: first sign change of the
/// nearest-to-zero eigenvalue on a scan of the bracket, refined by bisection.
pub fn tune_grid_critical(shape: &Potential, grid: &Grid3, bracket: (f64, f64), scan: usize) -> Result<GridCritical> {
    let (lo, hi) = bracket;
    if !(lo < hi) || scan < 2 {
        return Err(ScopeError::Config(format!("bad bracket [{lo}, {hi}] or scan {scan}")));
    }
    let eval = |c: f64| nearest_zero_eigenvalue(&shape.with_coupling(c), grid);
    let cs: Vec<f64> = (0..scan).map(|k| lo + (hi - lo) * k as f64 / (scan - 1) as f64).collect();
    let vals = cs.par_iter().map(|&c| eval(c)).collect::<Result<Vec<f64>>>()?;
    let k = (0..scan - 1)
        .find(|&k| vals[k] * vals[k + 1] <= 0.0)
        .ok_or_else(|| ScopeError::Config(format!("no grid-critical coupling in [{lo}, {hi}]")))?;
    let (mut a, mut b, mut fa, mut fb) = (cs[k], cs[k + 1], vals[k], vals[k + 1]);
    let mut iterations = 0;
    while b - a > 4.0 * f64::EPSILON * b.abs() && fa != 0.0 && fb != 0.0 && iterations < 200 {
        let mid = 0.5 * (a + b);
        let fm = eval(mid)?;
        if fm * fa <= 0.0 {
            b = mid;
            fb = fm;
        } else {
            a = mid;
            fa = fm;
        }
        iterations += 1;
    }
    let (coupling, eigenvalue) = if fa.abs() <= fb.abs() { (a, fa) } else { (b, fb) };
    Ok(GridCritical { coupling, eigenvalue, iterations })
}
