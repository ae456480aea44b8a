//! Potentials, the factorisation V = U v^2 = w v, and inverse constructions
//! that plant a zero-energy resonance or eigenvalue.

use crate::error::{Result, ScopeError};
use crate::grid::{norm3, Grid3};
use serde::{Deserialize, Serialize};

/// Quintic Hermite interpolant on [a, b] matching value, slope and curvature at both ends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuinticBlend {
    a: f64,
    width: f64,
    c: [f64; 6],
}

impl QuinticBlend {
    pub fn new(a: f64, b: f64, left: [f64; 3], right: [f64; 3]) -> Self {
        let hw = b - a;
        let c0 = left[0];
        let c1 = hw * left[1];
        let c2 = 0.5 * hw * hw * left[2];
        let p = right[0] - (c0 + c1 + c2);
        let d = hw * right[1] - (c1 + 2.0 * c2);
        let s = hw * hw * right[2] - 2.0 * c2;
        let c3 = 10.0 * p - 4.0 * d + 0.5 * s;
        let c4 = -15.0 * p + 7.0 * d - s;
        let c5 = 6.0 * p - 3.0 * d + 0.5 * s;
        Self { a, width: hw, c: [c0, c1, c2, c3, c4, c5] }
    }

    /// Value and first two r-derivatives.
    pub fn eval(&self, r: f64) -> [f64; 3] {
        let t = (r - self.a) / self.width;
        let c = &self.c;
        let f = c[0] + t * (c[1] + t * (c[2] + t * (c[3] + t * (c[4] + t * c[5]))));
        let df = c[1] + t * (2.0 * c[2] + t * (3.0 * c[3] + t * (4.0 * c[4] + t * 5.0 * c[5])));
        let d2f = 2.0 * c[2] + t * (6.0 * c[3] + t * (12.0 * c[4] + t * 20.0 * c[5]));
        [f, df / self.width, d2f / (self.width * self.width)]
    }
}

/// Zero-energy radial solution planted by an inverse construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantedSolution {
    pub ell: u32,
    blend: QuinticBlend,
    r: f64,
}

impl PlantedSolution {
    /// Radial function u(r) (so the 3D solution is u(r)/r times Y_ell) and its derivatives.
    pub fn u(&self, r: f64) -> [f64; 3] {
        let inner = 0.5 * self.r;
        match self.ell {
            0 if r <= inner => [r, 1.0, 0.0],
            0 if r >= self.r => [1.0, 0.0, 0.0],
            1 if r <= inner => [r * r, 2.0 * r, 2.0],
            1 if r >= self.r => [1.0 / r, -1.0 / (r * r), 2.0 / (r * r * r)],
            _ => self.blend.eval(r),
        }
    }

    /// The planted 3D solution g: u(r)/r for s-waves, (u(r)/r) z/r for the p-wave (m = 0).
    pub fn g(&self, x: &[f64; 3]) -> f64 {
        let r = norm3(x);
        let u = self.u(r)[0];
        match self.ell {
            0 => u / r,
            _ => u * x[2] / (r * r),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    /// -1 on r < R.
    SquareWell,
    /// -(1 - (r/R)^2)^3 on r < R.
    SmoothWell,
    /// u''/u for the planted resonance.
    Planted(PlantedSolution),
}

#[derive(Debug, Clone, PartialEq)]
pub enum PotentialForm {
    /// V(r) = coupling * shape(r).
    Radial { shape: Shape, coupling: f64 },
    /// Samples on a specific grid.
    Samples { grid: Grid3, values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Potential {
    pub form: PotentialForm,
    /// Nominal decay exponent; compactly supported potentials report infinity.
    pub beta: f64,
    pub support_radius: f64,
}

impl Potential {
    pub fn square_well(depth: f64, radius: f64) -> Self {
        Self { form: PotentialForm::Radial { shape: Shape::SquareWell, coupling: depth }, beta: f64::INFINITY, support_radius: radius }
    }

    pub fn smooth_well(depth: f64, radius: f64) -> Self {
        Self { form: PotentialForm::Radial { shape: Shape::SmoothWell, coupling: depth }, beta: f64::INFINITY, support_radius: radius }
    }

    pub fn is_radial(&self) -> bool {
        matches!(self.form, PotentialForm::Radial { .. })
    }

    pub fn coupling(&self) -> f64 {
        match self.form {
            PotentialForm::Radial { coupling, .. } => coupling,
            PotentialForm::Samples { .. } => 1.0,
        }
    }

    /// Same shape with a different coupling constant.
    pub fn with_coupling(&self, c: f64) -> Self {
        let mut out = self.clone();
        match &mut out.form {
            PotentialForm::Radial { coupling, .. } => *coupling = c,
            PotentialForm::Samples { values, .. } => values.iter_mut().for_each(|v| *v *= c),
        }
        out
    }

    pub fn planted(&self) -> Option<PlantedSolution> {
        match self.form {
            PotentialForm::Radial { shape: Shape::Planted(p), .. } => Some(p),
            _ => None,
        }
    }

    /// Radii where the radial profile is not smooth (besides the support edge).
    pub fn breakpoints(&self) -> Vec<f64> {
        match self.form {
            PotentialForm::Radial { shape: Shape::Planted(_), .. } => vec![0.5 * self.support_radius],
            _ => Vec::new(),
        }
    }

    /// Radial profile value; `None` for sampled potentials.
    pub fn radial_value(&self, r: f64) -> Option<f64> {
        let PotentialForm::Radial { shape, coupling } = &self.form else { return None };
        let big_r = self.support_radius;
        let base = match shape {
            _ if r >= big_r => 0.0,
            Shape::SquareWell => -1.0,
            Shape::SmoothWell => {
                let s = r / big_r;
                -(1.0 - s * s).powi(3)
            }
            Shape::Planted(p) => {
                let [u, _, d2] = p.u(r);
                match p.ell {
                    0 => d2 / u,
                    _ => (d2 - 2.0 * u / (r * r)) / u,
                }
            }
        };
        Some(coupling * base)
    }

    pub fn sample(&self, grid: &Grid3) -> Result<Vec<f64>> {
        let values = match &self.form {
            PotentialForm::Radial { .. } => {
                if self.support_radius >= grid.l {
                    return Err(ScopeError::Config(format!("support radius {} not inside half-width {}", self.support_radius, grid.l)));
                }
                (0..grid.len()).map(|p| self.radial_value(norm3(&grid.point(p))).unwrap()).collect::<Vec<_>>()
            }
            PotentialForm::Samples { grid: g, values } => {
                if g != grid {
                    return Err(ScopeError::Config("sampled potential belongs to a different grid".into()));
                }
                values.clone()
            }
        };
        if values.iter().any(|v| !v.is_finite()) {
            return Err(ScopeError::NonFinite("potential sample".into()));
        }
        Ok(values)
    }
}

fn check_positive(p: &PlantedSolution) -> Result<()> {
    let m = 4000;
    for k in 1..=m {
        let r = p.r * k as f64 / m as f64;
        if p.u(r)[0] <= 0.0 {
            return Err(ScopeError::Config(format!("profile vanishes at r = {r}")));
        }
    }
    Ok(())
}

/// s-wave resonance: u = r near 0, u = 1 beyond R, quintic blend on [R/2, R].
/// V = u''/u; the zero-energy solution g = u/r is bounded but not square integrable.
pub fn make_resonant_potential(r: f64) -> Result<Potential> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(ScopeError::Config(format!("resonant support radius {r} must be finite and positive")));
    }
    let a = 0.5 * r;
    let blend = QuinticBlend::new(a, r, [a, 1.0, 0.0], [1.0, 0.0, 0.0]);
    let planted = PlantedSolution { ell: 0, blend, r };
    check_positive(&planted)?;
    Ok(Potential { form: PotentialForm::Radial { shape: Shape::Planted(planted), coupling: 1.0 }, beta: f64::INFINITY, support_radius: r })
}

/// p-wave eigenvalue: f = r^2 near 0, f = 1/r beyond R; V = (f'' - 2f/r^2)/f,
/// with L^2 eigenfunction (f/r) Y_1.
pub fn make_eigen_potential(r: f64) -> Result<Potential> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(ScopeError::Config(format!("eigen support radius {r} must be finite and positive")));
    }
    let a = 0.5 * r;
    let blend = QuinticBlend::new(a, r, [a * a, 2.0 * a, 2.0], [1.0 / r, -1.0 / (r * r), 2.0 / (r * r * r)]);
    let planted = PlantedSolution { ell: 1, blend, r };
    check_positive(&planted)?;
    Ok(Potential { form: PotentialForm::Radial { shape: Shape::Planted(planted), coupling: 1.0 }, beta: f64::INFINITY, support_radius: r })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PotentialSplit {
    pub grid: Grid3,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub w: Vec<f64>,
    pub alpha: f64,
    /// Indices where V != 0, ascending.
    pub support: Vec<usize>,
}

impl PotentialSplit {
    pub fn potential(&self) -> Vec<f64> {
        self.w.iter().zip(&self.v).map(|(w, v)| w * v).collect()
    }
}

pub fn split_samples(grid: &Grid3, values: &[f64]) -> Result<PotentialSplit> {
    if values.len() != grid.len() {
        return Err(ScopeError::Config(format!("{} samples for {} grid points", values.len(), grid.len())));
    }
    if let Some(p) = values.iter().position(|v| !v.is_finite()) {
        return Err(ScopeError::NonFinite(format!("potential at point {p}")));
    }
    let u: Vec<f64> = values.iter().map(|&x| if x >= 0.0 { 1.0 } else { -1.0 }).collect();
    let v: Vec<f64> = values.iter().map(|x| x.abs().sqrt()).collect();
    let w = u.iter().zip(&v).map(|(s, v)| s * v).collect();
    let alpha = grid.weight() * values.iter().map(|x| x.abs()).sum::<f64>();
    let support = (0..values.len()).filter(|&p| values[p] != 0.0).collect();
    Ok(PotentialSplit { grid: *grid, u, v, w, alpha, support })
}

pub fn split_potential(pot: &Potential, grid: &Grid3) -> Result<PotentialSplit> {
    split_samples(grid, &pot.sample(grid)?)
}

/// JSON potential records accepted on the command line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PotentialSpec {
    SquareWell { depth: f64, radius: f64 },
    SmoothWell { depth: f64, radius: f64 },
    Resonant {
        #[serde(rename = "R")]
        r: f64,
    },
    Eigen {
        #[serde(rename = "R")]
        r: f64,
    },
    Grid { values: String },
}

impl PotentialSpec {
    /// Build the potential; `grid` is needed to attach sampled values.
    pub fn build(&self, grid: &Grid3) -> Result<Potential> {
        match self {
            PotentialSpec::SquareWell { depth, radius } => positive("radius", *radius).map(|_| Potential::square_well(*depth, *radius)),
            PotentialSpec::SmoothWell { depth, radius } => positive("radius", *radius).map(|_| Potential::smooth_well(*depth, *radius)),
            PotentialSpec::Resonant { r } => make_resonant_potential(*r),
            PotentialSpec::Eigen { r } => make_eigen_potential(*r),
            PotentialSpec::Grid { values } => {
                let text = std::fs::read_to_string(values).map_err(|e| ScopeError::Config(format!("{values}: {e}")))?;
                let vals: Vec<f64> = serde_json::from_str(&text).map_err(|e| ScopeError::Config(format!("{values}: {e}")))?;
                if vals.len() != grid.len() {
                    return Err(ScopeError::Config(format!("{values}: {} values, grid has {}", vals.len(), grid.len())));
                }
                let support_radius = (0..grid.len()).filter(|&p| vals[p] != 0.0).map(|p| norm3(&grid.point(p))).fold(0.0, f64::max);
                Ok(Potential { form: PotentialForm::Samples { grid: *grid, values: vals }, beta: f64::INFINITY, support_radius })
            }
        }
    }
}

fn positive(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(ScopeError::Config(format!("{name} = {x} must be positive")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;
    use proptest::prelude::*;

    #[test]
    fn split_examples() {
        let g = build_grid(4, 1.0).unwrap();
        let mut vals = vec![0.0; 64];
        vals[0] = 4.0;
        vals[1] = -9.0;
        let s = split_samples(&g, &vals).unwrap();
        assert_eq!((s.u[0], s.v[0], s.w[0]), (1.0, 2.0, 2.0));
        assert_eq!((s.u[1], s.v[1], s.w[1]), (-1.0, 3.0, -3.0));
        assert_eq!((s.u[2], s.v[2], s.w[2]), (1.0, 0.0, 0.0));
        assert_eq!(s.support, vec![0, 1]);
        assert_eq!(s.alpha, 13.0 * g.weight());
        vals[3] = f64::NAN;
        assert!(split_samples(&g, &vals).is_err());
    }

    proptest! {
        #[test]
        fn split_recombines_exactly(vals in proptest::collection::vec(-50.0f64..50.0, 64)) {
            let g = build_grid(4, 1.0).unwrap();
            let s = split_samples(&g, &vals).unwrap();
            for p in 0..64 {
                prop_assert!((s.u[p] * s.v[p] * s.v[p] - vals[p]).abs() <= 4.0 * f64::EPSILON * vals[p].abs());
                prop_assert!((s.w[p] * s.v[p] - vals[p]).abs() <= 4.0 * f64::EPSILON * vals[p].abs());
                prop_assert!(s.v[p] >= 0.0);
            }
            prop_assert!(s.alpha >= 0.0);
        }
    }

    #[test]
    fn quintic_blend_matches_end_data() {
        let q = QuinticBlend::new(1.0, 2.5, [1.0, 2.0, 2.0], [0.4, -0.16, 0.128]);
        let l = q.eval(1.0);
        let r = q.eval(2.5);
        for (a, b) in l.iter().zip([1.0, 2.0, 2.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in r.iter().zip([0.4, -0.16, 0.128]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn planted_potentials_are_continuous_and_compact() {
        for pot in [make_resonant_potential(2.0).unwrap(), make_eigen_potential(2.5).unwrap()] {
            let big = pot.support_radius;
            assert_eq!(pot.radial_value(big), Some(0.0));
            assert_eq!(pot.radial_value(big + 0.3), Some(0.0));
            let below = pot.radial_value(big - 1e-7).unwrap();
            assert!(below.abs() < 1e-3, "jump at support edge {below}");
            let mid = 0.5 * big;
            let jump = pot.radial_value(mid + 1e-9).unwrap() - pot.radial_value(mid - 1e-9).unwrap();
            assert!(jump.abs() < 1e-6);
        }
    }

    #[test]
    fn eigen_potential_vanishes_inside_core() {
        let pot = make_eigen_potential(2.5).unwrap();
        assert_eq!(pot.radial_value(0.5), Some(0.0));
    }

    #[test]
    fn rejects_bad_radius() {
        assert!(make_resonant_potential(f64::INFINITY).is_err());
        assert!(make_eigen_potential(-1.0).is_err());
    }

    #[test]
    fn spec_json_roundtrip() {
        let s: PotentialSpec = serde_json::from_str(r#"{"kind":"square_well","depth":2.4,"radius":1.0}"#).unwrap();
        assert_eq!(s, PotentialSpec::SquareWell { depth: 2.4, radius: 1.0 });
        let s: PotentialSpec = serde_json::from_str(r#"{"kind":"eigen","R":2.5}"#).unwrap();
        assert_eq!(s, PotentialSpec::Eigen { r: 2.5 });
        let back = serde_json::to_string(&PotentialSpec::Resonant { r: 2.0 }).unwrap();
        assert_eq!(back, r#"{"kind":"resonant","R":2.0}"#);
    }

    #[test]
    fn radial_samples_are_parity_even() {
        let g = build_grid(8, 3.0).unwrap();
        let v = make_eigen_potential(2.5).unwrap().sample(&g).unwrap();
        for p in 0..g.len() {
            assert_eq!(v[p], v[g.parity(p)]);
        }
    }
}
