//! Embedded targets `N ⊂ R^q` with closed-form extrinsic geometry.
//!
//! Only the unit sphere `S^{q-1}` and the flat torus `R^q / (2π Z)^q` are
//! supported; for both every curvature object is an explicit formula, so the
//! only error in the flow comes from the grid.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Axis, Field, GridSpec};

/// Period of each coordinate of the flat-torus target.
pub const FLAT_PERIOD: f64 = 2.0 * std::f64::consts::PI;

/// Below this norm radial projection onto the sphere is refused.
pub const DEGENERATE_NORM: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Target {
    /// Unit sphere `S^{q-1} ⊂ R^q`.
    Sphere { q: usize },
    /// `R^q` with periodic identification; all curvature vanishes.
    FlatTorus { q: usize },
}

impl Target {
    pub fn sphere(q: usize) -> Result<Self> {
        if q < 2 {
            return Err(Error::Incompatible(format!("sphere target needs q >= 2, got {q}")));
        }
        Ok(Target::Sphere { q })
    }

    pub fn flat(q: usize) -> Result<Self> {
        if q < 1 {
            return Err(Error::Incompatible("flat target needs q >= 1".into()));
        }
        Ok(Target::FlatTorus { q })
    }

    pub fn q(self) -> usize {
        match self {
            Target::Sphere { q } | Target::FlatTorus { q } => q,
        }
    }

    pub fn is_flat(self) -> bool {
        matches!(self, Target::FlatTorus { .. })
    }

    pub fn kind_code(self) -> u64 {
        match self {
            Target::Sphere { .. } => 0,
            Target::FlatTorus { .. } => 1,
        }
    }

    pub fn from_code(code: u64, q: usize) -> Result<Self> {
        match code {
            0 => Target::sphere(q),
            1 => Target::flat(q),
            _ => Err(Error::Incompatible(format!("unknown target kind code {code}"))),
        }
    }

    /// Difference `b - a` of two points of N, as an ambient vector.
    #[inline]
    pub fn diff(self, a: f64, b: f64) -> f64 {
        let d = b - a;
        match self {
            Target::Sphere { .. } => d,
            Target::FlatTorus { .. } => d - FLAT_PERIOD * (d / FLAT_PERIOD).round(),
        }
    }

    /// Distance of an ambient point from N.
    pub fn constraint_residual(self, y: &[f64]) -> f64 {
        match self {
            Target::Sphere { .. } => (dot(y, y).sqrt() - 1.0).abs(),
            Target::FlatTorus { .. } => 0.0,
        }
    }

    /// Apply the tangent projector at `u` to a real ambient vector in place.
    #[inline]
    pub fn project_tangent(self, u: &[f64], x: &mut [f64]) {
        if let Target::Sphere { .. } = self {
            let c = dot(u, x);
            for (xi, ui) in x.iter_mut().zip(u) {
                *xi -= c * ui;
            }
        }
    }

    /// Apply the tangent projector at `u` to one complex slot (length q).
    #[inline]
    pub fn project_tangent_c(self, u: &[f64], x: &mut [Complex64]) {
        if let Target::Sphere { .. } = self {
            let c = dot_rc(u, x);
            for (xi, ui) in x.iter_mut().zip(u) {
                *xi -= c * *ui;
            }
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `Σ_i a_i b_i` for real `a` and complex `b`.
#[inline]
pub(crate) fn dot_rc(a: &[f64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).fold(Complex64::new(0.0, 0.0), |s, (x, y)| s + y * *x)
}

/// Nearest point of N to the ambient vector `y`.
pub fn project_point(y: &[f64], target: Target) -> Result<Vec<f64>> {
    match target {
        Target::Sphere { .. } => {
            let norm = dot(y, y).sqrt();
            if !(norm >= DEGENERATE_NORM) {
                return Err(Error::DegenerateProjection { norm });
            }
            Ok(y.iter().map(|v| v / norm).collect())
        }
        Target::FlatTorus { .. } => Ok(y.to_vec()),
    }
}

/// Tangent projector at `u` as a row-major `q x q` matrix.
pub fn tangent_projector(u: &[f64], target: Target) -> Vec<f64> {
    let q = u.len();
    let mut m = vec![0.0; q * q];
    for i in 0..q {
        m[i * q + i] = 1.0;
        if let Target::Sphere { .. } = target {
            for j in 0..q {
                m[i * q + j] -= u[i] * u[j];
            }
        }
    }
    m
}

/// Second fundamental form `II_u(X, Y)`, a normal vector.
pub fn second_fundamental_form(u: &[f64], x: &[f64], y: &[f64], target: Target) -> Vec<f64> {
    match target {
        Target::Sphere { .. } => {
            let c = dot(x, y);
            u.iter().map(|ui| -c * ui).collect()
        }
        Target::FlatTorus { .. } => vec![0.0; u.len()],
    }
}

/// Shape operator `P(ξ, X)`, fixed by `<P(ξ, X), Y> = <II(X, Y), ξ>`.
pub fn shape_operator(xi: &[f64], x: &[f64], u: &[f64], target: Target) -> Vec<f64> {
    match target {
        Target::Sphere { .. } => {
            let c = dot(u, xi);
            x.iter().map(|xv| -c * xv).collect()
        }
        Target::FlatTorus { .. } => vec![0.0; u.len()],
    }
}

/// Riemann tensor `R^N(X, Y)Z = <Y,Z>X - <X,Z>Y` (unit sphere, curvature 1).
pub fn riemann(u: &[f64], x: &[f64], y: &[f64], z: &[f64], target: Target) -> Vec<f64> {
    match target {
        Target::Sphere { .. } => {
            let (yz, xz) = (dot(y, z), dot(x, z));
            x.iter().zip(y).map(|(xv, yv)| yz * xv - xz * yv).collect()
        }
        Target::FlatTorus { .. } => vec![0.0; u.len()],
    }
}

/// Quartic term `B_u(du, ψ, du, ψ)` of the extrinsic map equation.
///
/// It collects the Christoffel corrections that turn the ambient derivative
/// of ψ into the projected one; for the unit sphere it reduces to
/// `Σ_α |du(e_α)·ψ|² u`, the normal part dropped by projecting `∂_α ψ`.
/// `psi` is one point's vector spinor laid out as two slots of length q.
pub fn b_term(du: [&[f64]; 2], psi: &[Complex64], u: &[f64], target: Target) -> Vec<f64> {
    let q = u.len();
    match target {
        Target::Sphere { .. } => {
            let mut c = 0.0;
            for d in du {
                for s in 0..2 {
                    c += dot_rc(d, &psi[s * q..(s + 1) * q]).norm_sqr();
                }
            }
            u.iter().map(|ui| c * ui).collect()
        }
        Target::FlatTorus { .. } => vec![0.0; q],
    }
}

/// A map from the grid into N, stored through the embedding as `q` reals per point.
#[derive(Clone, Debug, PartialEq)]
pub struct MapField {
    pub field: Field<f64>,
    pub target: Target,
}

impl MapField {
    pub fn new(grid: GridSpec, target: Target, f: impl Fn(f64, f64, &mut [f64])) -> Self {
        Self { field: Field::from_fn(grid, target.q(), false, f), target }
    }

    pub fn constant(grid: GridSpec, target: Target, point: &[f64]) -> Self {
        Self::new(grid, target, |_, _, v| v.copy_from_slice(point))
    }

    pub fn grid(&self) -> &GridSpec {
        &self.field.grid
    }

    pub fn q(&self) -> usize {
        self.target.q()
    }

    #[inline]
    pub fn at(&self, p: usize) -> &[f64] {
        self.field.at(p)
    }

    pub fn constraint_residual(&self) -> f64 {
        (0..self.grid().len()).map(|p| self.target.constraint_residual(self.at(p))).fold(0.0, f64::max)
    }

    pub fn check_on_target(&self, tol: f64) -> Result<()> {
        let residual = self.constraint_residual();
        if residual > tol || !residual.is_finite() {
            return Err(Error::OffTarget { residual });
        }
        Ok(())
    }

    /// Project every value onto N.
    pub fn projected(&self) -> Result<Self> {
        let mut out = self.clone();
        for p in 0..self.grid().len() {
            let v = project_point(self.at(p), self.target)?;
            out.field.at_mut(p).copy_from_slice(&v);
        }
        Ok(out)
    }

    /// Centered difference of the map along `axis` (ambient vectors).
    pub fn differential(&self, axis: Axis) -> Field<f64> {
        let g = *self.grid();
        let q = self.q();
        let inv = 1.0 / (2.0 * g.spacing(axis));
        let mut out = Field::zeros(g, q, false);
        for p in 0..g.len() {
            let (a, _) = g.neighbor(p, axis, true);
            let (b, _) = g.neighbor(p, axis, false);
            let (ua, ub) = (self.at(a), self.at(b));
            for (c, o) in out.at_mut(p).iter_mut().enumerate() {
                *o = self.target.diff(ub[c], ua[c]) * inv;
            }
        }
        out
    }

    /// Forward difference `(u(x + h e) - u(x)) / h`.
    pub fn forward_diff(&self, axis: Axis) -> Field<f64> {
        let g = *self.grid();
        let q = self.q();
        let inv = 1.0 / g.spacing(axis);
        let mut out = Field::zeros(g, q, false);
        for p in 0..g.len() {
            let (a, _) = g.neighbor(p, axis, true);
            let (ua, up) = (self.at(a), self.at(p));
            for (c, o) in out.at_mut(p).iter_mut().enumerate() {
                *o = self.target.diff(up[c], ua[c]) * inv;
            }
        }
        out
    }

    /// Second difference along one axis.
    pub fn second_diff(&self, axis: Axis) -> Field<f64> {
        let g = *self.grid();
        let q = self.q();
        let h = g.spacing(axis);
        let inv = 1.0 / (h * h);
        let mut out = Field::zeros(g, q, false);
        for p in 0..g.len() {
            let (a, _) = g.neighbor(p, axis, true);
            let (b, _) = g.neighbor(p, axis, false);
            let (ua, ub, up) = (self.at(a), self.at(b), self.at(p));
            for (c, o) in out.at_mut(p).iter_mut().enumerate() {
                *o = (self.target.diff(up[c], ua[c]) + self.target.diff(up[c], ub[c])) * inv;
            }
        }
        out
    }

    /// 5-point Laplacian of the ambient map.
    pub fn laplacian(&self) -> Field<f64> {
        let mut out = self.second_diff(Axis::X);
        out.axpy(1.0, &self.second_diff(Axis::Y));
        out
    }

    /// Cyclic shift by whole cells.
    pub fn shifted(&self, di: usize, dj: usize) -> Self {
        Self { field: self.field.shifted(di, dj), target: self.target }
    }
}
