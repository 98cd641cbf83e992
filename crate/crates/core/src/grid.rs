//! Flat torus `[0, Lx) x [0, Ly)` sampled on a uniform grid, with the four
//! spin structures and the finite-difference stencils used everywhere else.
//!
//! Grid point `(i, j)` sits at `(i * hx, j * hy)` and has flat index
//! `j * nx + i`. Stored values are single-valued on the fundamental domain;
//! spinor-valued ("twisted") fields pick up the factor `(-1)^delta` whenever
//! a stencil reaches across the seam of an antiperiodic direction.
//!
//! Conventions: `laplacian` is the direct 5-point stencil (it is *not*
//! `partial` composed with itself, which would be the wide 3-point-spaced
//! stencil), and `partial` is the centered second-order difference.

use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Values a grid field can hold.
pub trait FieldValue:
    Copy
    + Default
    + PartialEq
    + std::fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Neg<Output = Self>
    + Mul<f64, Output = Self>
{
    /// Real part of the (Hermitian) product `conj(self) * other`.
    fn real_dot(self, other: Self) -> f64;
}

impl FieldValue for f64 {
    fn real_dot(self, other: Self) -> f64 {
        self * other
    }
}

impl FieldValue for Complex64 {
    fn real_dot(self, other: Self) -> f64 {
        self.re * other.re + self.im * other.im
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SpinStructure {
    pub delta1: u8,
    pub delta2: u8,
}

impl SpinStructure {
    pub const PERIODIC: SpinStructure = SpinStructure { delta1: 0, delta2: 0 };

    pub fn new(delta1: u8, delta2: u8) -> Result<Self> {
        if delta1 > 1 || delta2 > 1 {
            return Err(Error::InvalidGrid(format!("spin structure bits must be 0 or 1, got ({delta1}, {delta2})")));
        }
        Ok(Self { delta1, delta2 })
    }

    pub fn all() -> [SpinStructure; 4] {
        [(0, 0), (1, 0), (0, 1), (1, 1)].map(|(delta1, delta2)| SpinStructure { delta1, delta2 })
    }

    pub fn is_trivial(self) -> bool {
        self.delta1 == 0 && self.delta2 == 0
    }

    pub fn delta(self, axis: Axis) -> u8 {
        match axis {
            Axis::X => self.delta1,
            Axis::Y => self.delta2,
        }
    }

    /// Sign picked up by a spinor value carried once around `axis`.
    pub fn seam_sign(self, axis: Axis) -> f64 {
        if self.delta(axis) == 1 {
            -1.0
        } else {
            1.0
        }
    }
}

impl std::fmt::Display for SpinStructure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{})", self.delta1, self.delta2)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Axis {
    X,
    Y,
}

impl Axis {
    pub const BOTH: [Axis; 2] = [Axis::X, Axis::Y];

    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    pub lx: f64,
    pub ly: f64,
    pub nx: usize,
    pub ny: usize,
    pub hx: f64,
    pub hy: f64,
    pub spin: SpinStructure,
}

pub fn make_grid(lx: f64, ly: f64, nx: usize, ny: usize, spin: SpinStructure) -> Result<GridSpec> {
    GridSpec::new(lx, ly, nx, ny, spin)
}

impl GridSpec {
    pub const MIN_POINTS: usize = 8;

    pub fn new(lx: f64, ly: f64, nx: usize, ny: usize, spin: SpinStructure) -> Result<Self> {
        if !(lx > 0.0 && ly > 0.0 && lx.is_finite() && ly.is_finite()) {
            return Err(Error::InvalidGrid(format!("lengths must be positive and finite, got ({lx}, {ly})")));
        }
        for (name, n) in [("nx", nx), ("ny", ny)] {
            if n < Self::MIN_POINTS {
                return Err(Error::InvalidGrid(format!(
                    "{name} = {n} is too small (need at least {})",
                    Self::MIN_POINTS
                )));
            }
            if n % 2 != 0 {
                return Err(Error::InvalidGrid(format!("{name} = {n} must be even")));
            }
        }
        Ok(Self { lx, ly, nx, ny, hx: lx / nx as f64, hy: ly / ny as f64, spin })
    }

    pub fn with_spin(self, spin: SpinStructure) -> Self {
        Self { spin, ..self }
    }

    /// Same index grid on the torus scaled by `factor`.
    pub fn scaled(self, factor: f64) -> Result<Self> {
        Self::new(self.lx * factor, self.ly * factor, self.nx, self.ny, self.spin)
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn coords(&self, p: usize) -> (f64, f64) {
        let (i, j) = (p % self.nx, p / self.nx);
        (i as f64 * self.hx, j as f64 * self.hy)
    }

    pub fn cell_area(&self) -> f64 {
        self.hx * self.hy
    }

    pub fn volume(&self) -> f64 {
        self.lx * self.ly
    }

    pub fn injectivity_radius(&self) -> f64 {
        0.5 * self.lx.min(self.ly)
    }

    pub fn spacing(&self, axis: Axis) -> f64 {
        match axis {
            Axis::X => self.hx,
            Axis::Y => self.hy,
        }
    }

    pub fn min_spacing(&self) -> f64 {
        self.hx.min(self.hy)
    }

    pub fn max_spacing(&self) -> f64 {
        self.hx.max(self.hy)
    }

    /// Neighbor of `p` one cell along `axis`; the flag says whether the
    /// seam of the fundamental domain was crossed.
    #[inline]
    pub fn neighbor(&self, p: usize, axis: Axis, forward: bool) -> (usize, bool) {
        let (i, j) = (p % self.nx, p / self.nx);
        match (axis, forward) {
            (Axis::X, true) if i + 1 == self.nx => (self.index(0, j), true),
            (Axis::X, true) => (p + 1, false),
            (Axis::X, false) if i == 0 => (self.index(self.nx - 1, j), true),
            (Axis::X, false) => (p - 1, false),
            (Axis::Y, true) if j + 1 == self.ny => (self.index(i, 0), true),
            (Axis::Y, true) => (p + self.nx, false),
            (Axis::Y, false) if j == 0 => (self.index(i, self.ny - 1), true),
            (Axis::Y, false) => (p - self.nx, false),
        }
    }

    /// Nearest grid point to `(x, y)`, wrapping onto the fundamental domain.
    /// Ties round away from zero, so `Lx - hx/2` snaps onto the seam point 0.
    pub fn snap(&self, x: f64, y: f64) -> usize {
        let wrap = |v: f64, h: f64, n: usize| -> usize {
            let k = (v / h).round() as i64;
            k.rem_euclid(n as i64) as usize
        };
        self.index(wrap(x, self.hx, self.nx), wrap(y, self.hy, self.ny))
    }

    /// Distance on the torus between grid point `p` and `(x, y)`.
    pub fn periodic_distance(&self, p: usize, x: f64, y: f64) -> f64 {
        let (px, py) = self.coords(p);
        let fold = |d: f64, l: f64| {
            let d = d.rem_euclid(l);
            d.min(l - d)
        };
        fold(px - x, self.lx).hypot(fold(py - y, self.ly))
    }

    /// Torus distance between two grid points, from their index offsets.
    pub fn lattice_distance(&self, p: usize, c: usize) -> f64 {
        let fold = |a: usize, b: usize, n: usize| {
            let d = a.abs_diff(b);
            d.min(n - d) as f64
        };
        let dx = fold(p % self.nx, c % self.nx, self.nx) * self.hx;
        let dy = fold(p / self.nx, c / self.nx, self.ny) * self.hy;
        dx.hypot(dy)
    }

    /// Shift applied to a twisted value fetched across the seam.
    #[inline]
    pub fn phase(&self, axis: Axis, wrapped: bool, twisted: bool) -> f64 {
        if wrapped && twisted {
            self.spin.seam_sign(axis)
        } else {
            1.0
        }
    }
}

/// Grid-indexed values, `width` entries per grid point.
#[derive(Clone, Debug, PartialEq)]
pub struct Field<T> {
    pub grid: GridSpec,
    pub width: usize,
    /// Spinor-valued fields obey the spin-structure phase rule.
    pub twisted: bool,
    pub data: Vec<T>,
}

pub type ScalarField = Field<f64>;

impl<T: FieldValue> Field<T> {
    pub fn zeros(grid: GridSpec, width: usize, twisted: bool) -> Self {
        Self { grid, width, twisted, data: vec![T::default(); grid.len() * width] }
    }

    pub fn from_fn(grid: GridSpec, width: usize, twisted: bool, mut f: impl FnMut(f64, f64, &mut [T])) -> Self {
        let mut field = Self::zeros(grid, width, twisted);
        for p in 0..grid.len() {
            let (x, y) = grid.coords(p);
            f(x, y, field.at_mut(p));
        }
        field
    }

    #[inline]
    pub fn at(&self, p: usize) -> &[T] {
        &self.data[p * self.width..(p + 1) * self.width]
    }

    #[inline]
    pub fn at_mut(&mut self, p: usize) -> &mut [T] {
        &mut self.data[p * self.width..(p + 1) * self.width]
    }

    fn like(&self) -> Self {
        Self::zeros(self.grid, self.width, self.twisted)
    }

    /// Discrete L2 inner product (real part), cell-area quadrature.
    pub fn inner(&self, other: &Self) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a.real_dot(*b)).sum::<f64>() * self.grid.cell_area()
    }

    pub fn norm_l2(&self) -> f64 {
        self.inner(self).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|v| v.real_dot(*v).sqrt()).fold(0.0, f64::max)
    }

    pub fn axpy(&mut self, a: f64, x: &Self) {
        for (s, v) in self.data.iter_mut().zip(&x.data) {
            *s = *s + *v * a;
        }
    }

    pub fn scaled(&self, a: f64) -> Self {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v = *v * a);
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    /// Cyclic shift by `(di, dj)` grid cells. Twisted values that wrap pick
    /// up the seam sign, so shifting commutes with every stencil.
    pub fn shifted(&self, di: usize, dj: usize) -> Self {
        let g = self.grid;
        let mut out = self.like();
        for j in 0..g.ny {
            for i in 0..g.nx {
                let (ti, tj) = (i + di, j + dj);
                let mut sign = 1.0;
                if self.twisted {
                    for _ in 0..ti / g.nx {
                        sign *= g.spin.seam_sign(Axis::X);
                    }
                    for _ in 0..tj / g.ny {
                        sign *= g.spin.seam_sign(Axis::Y);
                    }
                }
                let q = g.index(ti % g.nx, tj % g.ny);
                let src = self.at(g.index(i, j));
                for (d, s) in out.at_mut(q).iter_mut().zip(src) {
                    *d = *s * sign;
                }
            }
        }
        out
    }

    #[inline]
    fn fetch(&self, p: usize, axis: Axis, forward: bool) -> (usize, f64) {
        let (q, wrapped) = self.grid.neighbor(p, axis, forward);
        (q, self.grid.phase(axis, wrapped, self.twisted))
    }

    /// Forward difference `(f(x + h e) - f(x)) / h`.
    pub fn forward_diff(&self, axis: Axis) -> Self {
        let h = self.grid.spacing(axis);
        let mut out = self.like();
        for p in 0..self.grid.len() {
            let (q, s) = self.fetch(p, axis, true);
            for c in 0..self.width {
                out.data[p * self.width + c] =
                    (self.data[q * self.width + c] * s - self.data[p * self.width + c]) * (1.0 / h);
            }
        }
        out
    }
}

/// Centered difference along `axis`, phase-aware for twisted fields.
pub fn partial<T: FieldValue>(field: &Field<T>, axis: Axis) -> Field<T> {
    let g = field.grid;
    let w = field.width;
    let inv = 1.0 / (2.0 * g.spacing(axis));
    let mut out = field.like();
    for p in 0..g.len() {
        let (qp, sp) = field.fetch(p, axis, true);
        let (qm, sm) = field.fetch(p, axis, false);
        for c in 0..w {
            out.data[p * w + c] = (field.data[qp * w + c] * sp - field.data[qm * w + c] * sm) * inv;
        }
    }
    out
}

/// Second difference along one axis.
pub fn second_diff<T: FieldValue>(field: &Field<T>, axis: Axis) -> Field<T> {
    let g = field.grid;
    let w = field.width;
    let h = g.spacing(axis);
    let inv = 1.0 / (h * h);
    let mut out = field.like();
    for p in 0..g.len() {
        let (qp, sp) = field.fetch(p, axis, true);
        let (qm, sm) = field.fetch(p, axis, false);
        for c in 0..w {
            let v = field.data[p * w + c];
            out.data[p * w + c] = (field.data[qp * w + c] * sp + field.data[qm * w + c] * sm - v - v) * inv;
        }
    }
    out
}

/// 5-point Laplacian `d_x^2 + d_y^2` (analyst's sign).
pub fn laplacian<T: FieldValue>(field: &Field<T>) -> Field<T> {
    let mut out = second_diff(field, Axis::X);
    let yy = second_diff(field, Axis::Y);
    for (o, v) in out.data.iter_mut().zip(yy.data) {
        *o = *o + v;
    }
    out
}

/// Indicator of the geodesic ball `B_R(center)`: 1 where the grid point lies
/// within periodic distance `R` of the snapped center, else 0.
pub fn ball_mask(grid: &GridSpec, center: (f64, f64), radius: f64) -> Result<ScalarField> {
    check_radius(grid, radius)?;
    let c = grid.snap(center.0, center.1);
    Ok(ScalarField::zeros(*grid, 1, false).map_points(|p, w| {
        if grid.lattice_distance(p, c) <= radius {
            w[0] = 1.0;
        }
    }))
}

pub(crate) fn check_radius(grid: &GridSpec, radius: f64) -> Result<()> {
    let inj = grid.injectivity_radius();
    if !(radius < inj) {
        return Err(Error::RadiusTooLarge { radius, injectivity: inj });
    }
    let min = 2.0 * grid.max_spacing();
    // a few ulps of slack so that radii like i_M/8 == 2h on coarse grids count as resolved
    if radius < min * (1.0 - 1e-12) {
        return Err(Error::UnresolvedBall { radius, min });
    }
    Ok(())
}

impl ScalarField {
    fn map_points(mut self, mut f: impl FnMut(usize, &mut [f64])) -> Self {
        for p in 0..self.grid.len() {
            let w = self.width;
            f(p, &mut self.data[p * w..(p + 1) * w]);
        }
        self
    }

    pub fn scalar(grid: GridSpec, f: impl Fn(f64, f64) -> f64) -> Self {
        Field::from_fn(grid, 1, false, |x, y, v| v[0] = f(x, y))
    }

    /// Sum of values times cell area.
    pub fn integral(&self) -> f64 {
        self.data.iter().sum::<f64>() * self.grid.cell_area()
    }

    pub fn count_nonzero(&self) -> usize {
        self.data.iter().filter(|v| **v != 0.0).count()
    }
}
