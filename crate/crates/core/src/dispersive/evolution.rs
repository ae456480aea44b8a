//! Propagators for e^{itH}: exact dense spectral form on small grids, Strang
//! split-step Fourier on large ones, and the sup-norm decay fit.

use crate::error::{Result, ScopeError};
use crate::fit::fit_loglog;
use crate::grid::{Grid3, GridFunction};
use crate::linalg::real_symmetric_eig;
use faer::Mat;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::Arc;

/// Angular wavenumbers of the periodic box in FFT order.
pub fn wavenumbers(grid: &Grid3) -> Vec<f64> {
    let n = grid.n as i64;
    (0..n).map(|m| 2.0 * PI * (if m < (n + 1) / 2 { m } else { m - n }) as f64 / (n as f64 * grid.h)).collect()
}

/// 1D periodic spectral second-derivative matrix.
fn spectral_d2(grid: &Grid3) -> Mat<f64> {
    let n = grid.n;
    let k = wavenumbers(grid);
    Mat::from_fn(n, n, |j, l| {
        let d = (j as f64 - l as f64) * grid.h;
        -k.iter().map(|kk| kk * kk * (kk * d).cos()).sum::<f64>() / n as f64
    })
}

/// Dense H = -Delta + V with the periodic spectral Laplacian, fully diagonalized.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub grid: Grid3,
    pub h_matrix: Mat<f64>,
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Mat<f64>,
    pub bound_set: Vec<usize>,
    pub zero_set: Vec<usize>,
    pub ac_set: Vec<usize>,
}

impl SpectralDecomposition {
    pub fn new(grid: &Grid3, potential: &[f64], eps_rank: f64) -> Result<Self> {
        let n = grid.n;
        let size = grid.len();
        if potential.len() != size {
            return Err(ScopeError::Config(format!("{} potential samples for {} grid points", potential.len(), size)));
        }
        if size > 13_824 {
            return Err(ScopeError::InvalidGrid(format!("dense diagonalization of {size} points is not supported")));
        }
        let d2 = spectral_d2(grid);
        let h_matrix = Mat::from_fn(size, size, |p, q| {
            let (i, j, k) = grid.ijk(p);
            let (a, b, c) = grid.ijk(q);
            let mut lap = 0.0;
            if j == b && k == c {
                lap += d2[(i, a)];
            }
            if i == a && k == c {
                lap += d2[(j, b)];
            }
            if i == a && j == b {
                lap += d2[(k, c)];
            }
            -lap + if p == q { potential[p] } else { 0.0 }
        });
        let _ = n;
        let (eigenvalues, eigenvectors) = real_symmetric_eig(&h_matrix);
        let mut bound_set = Vec::new();
        let mut zero_set = Vec::new();
        let mut ac_set = Vec::new();
        for (j, &e) in eigenvalues.iter().enumerate() {
            if e.abs() < eps_rank {
                zero_set.push(j);
            } else if e < 0.0 {
                bound_set.push(j);
            } else {
                ac_set.push(j);
            }
        }
        Ok(Self { grid: *grid, h_matrix, eigenvalues, eigenvectors, bound_set, zero_set, ac_set })
    }

    /// Indices of the `k` eigenvalues of smallest magnitude.
    pub fn nearest_zero(&self, k: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.eigenvalues.len()).collect();
        idx.sort_by(|a, b| self.eigenvalues[*a].abs().total_cmp(&self.eigenvalues[*b].abs()));
        idx.truncate(k);
        idx
    }

    /// Orthonormal columns for the given eigen-indices.
    pub fn frame(&self, idx: &[usize]) -> Mat<f64> {
        Mat::from_fn(self.eigenvectors.nrows(), idx.len(), |p, j| self.eigenvectors[(p, idx[j])])
    }

    /// P_ac as a dense matrix.
    pub fn p_ac(&self) -> Mat<f64> {
        let f = self.frame(&self.ac_set);
        &f * f.transpose()
    }

    fn coefficients(&self, psi0: &GridFunction) -> Vec<C64> {
        let u = &self.eigenvectors;
        (0..u.ncols())
            .into_par_iter()
            .map(|j| (0..u.nrows()).map(|p| psi0.values[p] * u[(p, j)]).sum())
            .collect()
    }
}

/// psi(t) = sum_j e^{i t lambda_j} <u_j, psi0> u_j, over ac_set only when `ac_only`.
pub fn evolve_dense_spectral(sd: &SpectralDecomposition, psi0: &GridFunction, times: &[f64], ac_only: bool) -> Result<Vec<GridFunction>> {
    if psi0.grid != sd.grid {
        return Err(ScopeError::Config("initial state lives on a different grid".into()));
    }
    if let Some(t) = times.iter().find(|t| !t.is_finite()) {
        return Err(ScopeError::NonFinite(format!("time {t}")));
    }
    let coef = sd.coefficients(psi0);
    let keep: Vec<usize> = if ac_only { sd.ac_set.clone() } else { (0..coef.len()).collect() };
    let u = &sd.eigenvectors;
    Ok(times
        .iter()
        .map(|&t| {
            let phased: Vec<(usize, C64)> = keep.iter().map(|&j| (j, coef[j] * C64::from_polar(1.0, t * sd.eigenvalues[j]))).collect();
            let values = (0..u.nrows()).into_par_iter().map(|p| phased.iter().map(|(j, c)| c * u[(p, *j)]).sum()).collect();
            GridFunction { grid: sd.grid, values }
        })
        .collect())
}

/// In-place 3D FFT over a cubic array with the last index fastest.
struct Fft3 {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    scratch: Vec<C64>,
}

impl Fft3 {
    fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self { n, forward: planner.plan_fft_forward(n), inverse: planner.plan_fft_inverse(n), scratch: vec![C64::new(0.0, 0.0); n * n * n] }
    }

    /// (i, j, k) -> (j, k, i): the slowest axis becomes the fastest.
    fn rotate(&mut self, data: &mut [C64]) {
        let n = self.n;
        let src: &[C64] = data;
        self.scratch.par_chunks_mut(n * n).enumerate().for_each(|(j, slab)| {
            for k in 0..n {
                for i in 0..n {
                    slab[k * n + i] = src[(i * n + j) * n + k];
                }
            }
        });
        data.copy_from_slice(&self.scratch);
    }

    fn transform(&mut self, data: &mut [C64], inverse: bool) {
        let plan = if inverse { self.inverse.clone() } else { self.forward.clone() };
        let n = self.n;
        for _ in 0..3 {
            data.par_chunks_mut(n * n).for_each(|slab| plan.process(slab));
            self.rotate(data);
        }
        if inverse {
            let s = 1.0 / (n * n * n) as f64;
            data.par_iter_mut().for_each(|z| *z *= s);
        }
    }
}

/// Complex absorbing layer of the given width inside each face of the box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Absorber {
    pub width: f64,
    pub strength: f64,
}

/// Strang splitting e^{i dt V/2} e^{i dt k^2} e^{i dt V/2} on the periodic box.
pub struct SplitStep {
    pub grid: Grid3,
    pub dt: f64,
    pub absorber: Option<Absorber>,
    half: Vec<C64>,
    kinetic: Vec<C64>,
    fft: Fft3,
}

#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub sup_norms: Vec<f64>,
    pub l2_norms: Vec<f64>,
}

/// Norm drift beyond which a unitary run is declared unstable.
pub const NORM_DRIFT_LIMIT: f64 = 1e-6;

impl SplitStep {
    pub fn new(grid: &Grid3, potential: &[f64], dt: f64, absorber: Option<Absorber>) -> Result<Self> {
        if potential.len() != grid.len() {
            return Err(ScopeError::Config(format!("{} potential samples for {} grid points", potential.len(), grid.len())));
        }
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(ScopeError::Config(format!("time step must be positive, got {dt}")));
        }
        let vmax = potential.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if dt * vmax >= 0.1 {
            return Err(ScopeError::Config(format!("dt |V|_inf = {:.3} exceeds 0.1", dt * vmax)));
        }
        let n = grid.n;
        let l = grid.l;
        let ramp = |x: f64| match absorber {
            Some(a) => ((x.abs() - (l - a.width)) / a.width).clamp(0.0, 1.0).powi(2),
            None => 0.0,
        };
        let half = (0..grid.len())
            .map(|p| {
                let [x, y, z] = grid.point(p);
                let damp = absorber.map_or(0.0, |a| a.strength * (ramp(x) + ramp(y) + ramp(z)));
                C64::from_polar((-0.5 * dt * damp).exp(), 0.5 * dt * potential[p])
            })
            .collect();
        let k = wavenumbers(grid);
        let kinetic = (0..grid.len())
            .map(|p| {
                let (i, j, m) = grid.ijk(p);
                C64::from_polar(1.0, dt * (k[i] * k[i] + k[j] * k[j] + k[m] * k[m]))
            })
            .collect();
        Ok(Self { grid: *grid, dt, absorber, half, kinetic, fft: Fft3::new(n) })
    }

    pub fn step(&mut self, psi: &mut [C64]) {
        psi.par_iter_mut().zip(&self.half).for_each(|(a, b)| *a *= b);
        self.fft.transform(psi, false);
        psi.par_iter_mut().zip(&self.kinetic).for_each(|(a, b)| *a *= b);
        self.fft.transform(psi, true);
        psi.par_iter_mut().zip(&self.half).for_each(|(a, b)| *a *= b);
    }

    /// Advance `steps` steps, recording norms every `record_every` steps.
    pub fn run(&mut self, psi0: &GridFunction, steps: usize, record_every: usize) -> Result<(GridFunction, Trajectory)> {
        if psi0.grid != self.grid {
            return Err(ScopeError::Config("initial state lives on a different grid".into()));
        }
        let every = record_every.max(1);
        let mut psi = psi0.values.clone();
        let norm0 = psi0.l2_norm();
        let mut tr = Trajectory { times: vec![0.0], sup_norms: vec![psi0.sup_norm()], l2_norms: vec![norm0] };
        for s in 1..=steps {
            self.step(&mut psi);
            if s % every == 0 || s == steps {
                let g = GridFunction { grid: self.grid, values: psi };
                let l2 = g.l2_norm();
                if !l2.is_finite() {
                    return Err(ScopeError::Unstable(f64::INFINITY));
                }
                if self.absorber.is_none() && (l2 / norm0 - 1.0).abs() > NORM_DRIFT_LIMIT {
                    return Err(ScopeError::Unstable(l2 / norm0 - 1.0));
                }
                tr.times.push(s as f64 * self.dt);
                tr.sup_norms.push(g.sup_norm());
                tr.l2_norms.push(l2);
                psi = g.values;
            }
        }
        Ok((GridFunction { grid: self.grid, values: psi }, tr))
    }
}

/// Time step dividing `sample_every` evenly with dt |V|_inf below the splitting limit, and
/// the number of steps per sample.
pub fn step_for(potential: &[f64], sample_every: f64) -> (f64, usize) {
    let vmax = potential.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let cap = if vmax > 0.0 { (0.09 / vmax).min(sample_every) } else { sample_every };
    let per = (sample_every / cap).ceil().max(1.0);
    (sample_every / per, per as usize)
}

#[derive(Debug, Clone, Serialize)]
pub struct DecayFit {
    pub times: Vec<f64>,
    pub sup_norms: Vec<f64>,
    pub window: (f64, f64),
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub revival_time: f64,
}

/// 2 L / p_max with p_max = pi / h: the earliest time the fastest grid mode can wrap around.
pub fn revival_time(grid: &Grid3) -> f64 {
    2.0 * grid.l * grid.h / PI
}

/// Sup-norm of the free Gaussian e^{-|x|^2/(2 sigma^2)} under e^{-it Delta}.
pub fn free_gaussian_sup(sigma: f64, t: f64) -> f64 {
    (1.0 + 4.0 * t * t / sigma.powi(4)).powf(-0.75)
}

/// With an absorbing layer the wrap-around bound is replaced by a measured one: twice
/// the first time the free run's sup-norm leaves the analytic curve by `tol`.
pub fn measured_revival(free: &Trajectory, sigma: f64, tol: f64) -> f64 {
    let mut last = 0.0;
    for (t, s) in free.times.iter().zip(&free.sup_norms) {
        let exact = free_gaussian_sup(sigma, *t);
        if (s / exact - 1.0).abs() > tol {
            break;
        }
        last = *t;
    }
    2.0 * last
}

/// Least-squares slope of log sup|psi| against log t inside the window, capped at half the revival time.
pub fn measure_sup_decay(tr: &Trajectory, window: (f64, f64), revival: f64) -> Result<DecayFit> {
    let hi = window.1.min(0.5 * revival);
    let lo = window.0;
    let (ts, ss): (Vec<f64>, Vec<f64>) = tr.times.iter().zip(&tr.sup_norms).filter(|(t, _)| **t >= lo && **t <= hi).map(|(t, s)| (*t, *s)).unzip();
    if !(hi >= 10.0 * lo) || ts.len() < 8 {
        return Err(ScopeError::WindowTooShort(format!("window [{lo}, {hi}] with {} samples (revival {revival:.3})", ts.len())));
    }
    let fit = fit_loglog(&ts, &ss).ok_or_else(|| ScopeError::NonFinite("sup norms".into()))?;
    let ly: Vec<f64> = ss.iter().map(|s| s.ln()).collect();
    let mean = ly.iter().sum::<f64>() / ly.len() as f64;
    let tot: f64 = ly.iter().map(|y| (y - mean).powi(2)).sum();
    let res = fit.residual.powi(2) * ly.len() as f64;
    let r_squared = if tot > 0.0 { (1.0 - res / tot).clamp(0.0, 1.0) } else { 1.0 };
    Ok(DecayFit { times: ts, sup_norms: ss, window: (lo, hi), slope: fit.slope, intercept: fit.intercept, r_squared, revival_time: revival })
}
