//! Two-dimensional Clifford multiplication and the Dirac-type operators on
//! vector spinors `ψ ∈ C² ⊗ R^q`.
//!
//! Representation: `γ₁ = iσ₁`, `γ₂ = iσ₂`. Both are anti-Hermitian and square
//! to `-I`, so `∂̸ = γ_α ∂_α` satisfies `∂̸² = -Δ` and has Fourier symbol `-σ·ξ`
//! with eigenvalues `±|ξ|`. The spin connection of the flat torus is zero in
//! this trivialization; spin structures enter through seam phases only.
//!
//! The twisted connection is the projected ambient derivative
//! `∇̃_α ψ = Π_u ∂_α ψ`, applied slot by slot.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{laplacian, partial, Axis, Field, GridSpec};
use crate::target::{dot, dot_rc, MapField, Target};

/// Relative tangency tolerance enforced on inputs of the twisted operators.
pub const TANGENCY_TOL: f64 = 1e-10;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

pub type Gamma = [[Complex64; 2]; 2];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CliffordBasis {
    pub gamma1: Gamma,
    pub gamma2: Gamma,
}

pub const CLIFFORD: CliffordBasis = CliffordBasis {
    gamma1: [[ZERO, I], [I, ZERO]],
    gamma2: [[ZERO, Complex64::new(1.0, 0.0)], [Complex64::new(-1.0, 0.0), ZERO]],
};

impl CliffordBasis {
    pub fn gamma(&self, axis: Axis) -> &Gamma {
        match axis {
            Axis::X => &self.gamma1,
            Axis::Y => &self.gamma2,
        }
    }
}

/// `γ_axis` applied to the spinor pair `(a, b)`.
#[inline]
pub fn gamma_pair(axis: Axis, a: Complex64, b: Complex64) -> (Complex64, Complex64) {
    match axis {
        Axis::X => (I * b, I * a),
        Axis::Y => (b, -a),
    }
}

/// Spinor eigenvector of the Dirac symbol `-σ·ξ` with eigenvalue `lambda = ±|ξ|`,
/// normalized to unit length. For `ξ = 0` returns `(1, 0)`.
pub fn mode_spinor(xi: (f64, f64), lambda: f64) -> [Complex64; 2] {
    let v = [Complex64::new(xi.0, -xi.1), Complex64::new(-lambda, 0.0)];
    let n = (v[0].norm_sqr() + v[1].norm_sqr()).sqrt();
    if n == 0.0 {
        return [Complex64::new(1.0, 0.0), ZERO];
    }
    [v[0] / n, v[1] / n]
}

/// Grid field of vector spinors: per point two spinor slots of `q` complex numbers.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorSpinorField {
    pub field: Field<Complex64>,
    pub q: usize,
}

impl VectorSpinorField {
    pub fn zeros(grid: GridSpec, q: usize) -> Self {
        Self { field: Field::zeros(grid, 2 * q, true), q }
    }

    /// `f(x, y, slots)` fills the `2q` values at each point (slot s, component k at `s*q + k`).
    pub fn from_fn(grid: GridSpec, q: usize, f: impl FnMut(f64, f64, &mut [Complex64])) -> Self {
        Self { field: Field::from_fn(grid, 2 * q, true, f), q }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.field.grid
    }

    #[inline]
    pub fn at(&self, p: usize) -> &[Complex64] {
        self.field.at(p)
    }

    #[inline]
    pub fn at_mut(&mut self, p: usize) -> &mut [Complex64] {
        self.field.at_mut(p)
    }

    pub fn is_zero(&self) -> bool {
        self.field.data.iter().all(|v| v.re == 0.0 && v.im == 0.0)
    }

    /// `|ψ(x)|²` at one point.
    pub fn norm_sqr_at(&self, p: usize) -> f64 {
        self.at(p).iter().map(|v| v.norm_sqr()).sum()
    }

    /// `∫|ψ|²`.
    pub fn l2_sq(&self) -> f64 {
        self.field.inner(&self.field)
    }

    /// `∫|ψ|⁴`.
    pub fn l4_4(&self) -> f64 {
        let g = self.grid();
        (0..g.len()).map(|p| self.norm_sqr_at(p).powi(2)).sum::<f64>() * g.cell_area()
    }

    /// `max |ψ|²`.
    pub fn sup_sq(&self) -> f64 {
        (0..self.grid().len()).map(|p| self.norm_sqr_at(p)).fold(0.0, f64::max)
    }

    pub fn map_field(&self, f: impl FnOnce(&Field<Complex64>) -> Field<Complex64>) -> Self {
        Self { field: f(&self.field), q: self.q }
    }

    pub fn shifted(&self, di: usize, dj: usize) -> Self {
        Self { field: self.field.shifted(di, dj), q: self.q }
    }

    /// Largest `|ν·ψ^s|` over points and slots, for the normal `ν = u` of the sphere.
    pub fn tangency_residual(&self, u: &MapField) -> f64 {
        if u.target.is_flat() {
            return 0.0;
        }
        let q = self.q;
        let mut worst = 0.0f64;
        for p in 0..self.grid().len() {
            let (up, v) = (u.at(p), self.at(p));
            for s in 0..2 {
                worst = worst.max(dot_rc(up, &v[s * q..(s + 1) * q]).norm());
            }
        }
        worst
    }

    pub fn check_tangent(&self, u: &MapField, rel_tol: f64) -> Result<()> {
        if self.q != u.q() || self.grid() != u.grid() {
            return Err(Error::Incompatible("spinor and map live on different grids or targets".into()));
        }
        let residual = self.tangency_residual(u);
        let scale = self.sup_sq().sqrt();
        if !(residual <= rel_tol * scale) && residual > 0.0 {
            return Err(Error::NotTangent { residual });
        }
        Ok(())
    }
}

/// `γ_axis ⊗ I_q` applied pointwise.
pub fn clifford_mul(axis: Axis, psi: &VectorSpinorField) -> VectorSpinorField {
    let q = psi.q;
    let mut out = psi.clone();
    for p in 0..psi.grid().len() {
        let v = out.at_mut(p);
        for k in 0..q {
            let (a, b) = gamma_pair(axis, v[k], v[q + k]);
            v[k] = a;
            v[q + k] = b;
        }
    }
    out
}

fn add_gamma_times(out: &mut VectorSpinorField, axis: Axis, d: &Field<Complex64>) {
    let q = out.q;
    for p in 0..out.grid().len() {
        let src = d.at(p);
        let dst = out.at_mut(p);
        for k in 0..q {
            let (a, b) = gamma_pair(axis, src[k], src[q + k]);
            dst[k] += a;
            dst[q + k] += b;
        }
    }
}

/// Untwisted Dirac operator `∂̸ψ = γ₁∂₁ψ + γ₂∂₂ψ`, centered stencils.
pub fn dirac_flat(psi: &VectorSpinorField) -> VectorSpinorField {
    let mut out = VectorSpinorField::zeros(*psi.grid(), psi.q);
    for axis in Axis::BOTH {
        add_gamma_times(&mut out, axis, &partial(&psi.field, axis));
    }
    out
}

/// Apply `Π_u` to each spinor slot in place.
pub(crate) fn project_in_place(psi: &mut VectorSpinorField, u: &MapField) {
    if u.target.is_flat() {
        return;
    }
    let q = psi.q;
    for p in 0..psi.grid().len() {
        let up = u.at(p);
        let v = psi.at_mut(p);
        for s in 0..2 {
            u.target.project_tangent_c(up, &mut v[s * q..(s + 1) * q]);
        }
    }
}

/// `Π_u ψ` slot by slot; idempotent.
pub fn tangency_project(psi: &VectorSpinorField, u: &MapField) -> VectorSpinorField {
    let mut out = psi.clone();
    project_in_place(&mut out, u);
    out
}

/// Twisted Dirac operator `D̸ψ = γ_α Π_u ∂_α ψ`.
pub fn twisted_dirac(psi: &VectorSpinorField, u: &MapField) -> Result<VectorSpinorField> {
    psi.check_tangent(u, TANGENCY_TOL)?;
    Ok(twisted_dirac_unchecked(psi, u))
}

pub(crate) fn twisted_dirac_unchecked(psi: &VectorSpinorField, u: &MapField) -> VectorSpinorField {
    let mut out = dirac_flat(psi);
    project_in_place(&mut out, u);
    out
}

/// Pointwise covariant derivative `∇̃_α ψ = Π_u ∂_α ψ` (centered).
pub fn covariant_derivative(psi: &VectorSpinorField, u: &MapField, axis: Axis) -> VectorSpinorField {
    let mut out = VectorSpinorField { field: partial(&psi.field, axis), q: psi.q };
    project_in_place(&mut out, u);
    out
}

/// Edge projector `Π̄ = I - ½(u uᵀ + u' u'ᵀ)` applied to one slot, `u, u'` the
/// endpoints of a grid edge.
#[inline]
fn edge_project(target: Target, a: &[f64], b: &[f64], x: &mut [Complex64]) {
    if target.is_flat() {
        return;
    }
    let (ca, cb) = (dot_rc(a, x) * 0.5, dot_rc(b, x) * 0.5);
    for ((xi, ai), bi) in x.iter_mut().zip(a).zip(b) {
        *xi -= ca * *ai + cb * *bi;
    }
}

/// Edge covariant difference `Π̄ D⁺_α ψ`, stored at the tail point of each edge.
pub fn edge_covariant_diff(psi: &VectorSpinorField, u: &MapField, axis: Axis) -> VectorSpinorField {
    let g = *psi.grid();
    let q = psi.q;
    let mut d = psi.field.forward_diff(axis);
    if !u.target.is_flat() {
        for p in 0..g.len() {
            let (n, _) = g.neighbor(p, axis, true);
            let (a, b) = (u.at(p), u.at(n));
            let v = d.at_mut(p);
            for s in 0..2 {
                edge_project(u.target, a, b, &mut v[s * q..(s + 1) * q]);
            }
        }
    }
    VectorSpinorField { field: d, q }
}

/// Twisted connection Laplacian `Δ̃ψ = Π_u Σ_α D⁻_α(Π̄ D⁺_α ψ)`.
///
/// Compact form of `Σ_α Π∂_α(Π∂_α ψ)`: it reduces to the 5-point Laplacian for
/// flat targets, and `<Δ̃ψ, ψ> = -Σ <D⁺ψ, Π̄ D⁺ψ>` holds exactly for tangent ψ.
pub fn twisted_conn_laplacian(psi: &VectorSpinorField, u: &MapField) -> Result<VectorSpinorField> {
    psi.check_tangent(u, TANGENCY_TOL)?;
    Ok(twisted_conn_laplacian_unchecked(psi, u))
}

pub(crate) fn twisted_conn_laplacian_unchecked(psi: &VectorSpinorField, u: &MapField) -> VectorSpinorField {
    if u.target.is_flat() {
        return psi.map_field(laplacian);
    }
    let g = *psi.grid();
    let w = 2 * psi.q;
    let mut out = VectorSpinorField::zeros(g, psi.q);
    for axis in Axis::BOTH {
        let e = edge_covariant_diff(psi, u, axis);
        let inv = 1.0 / g.spacing(axis);
        for p in 0..g.len() {
            let (m, wrapped) = g.neighbor(p, axis, false);
            let s = g.phase(axis, wrapped, true);
            for c in 0..w {
                out.field.data[p * w + c] += (e.field.data[p * w + c] - e.field.data[m * w + c] * s) * inv;
            }
        }
    }
    project_in_place(&mut out, u);
    out
}

/// Real spinor pairing `Re Σ_s conj(a_s) b_s` of two spinor pairs.
#[inline]
pub fn spinor_dot(a: [Complex64; 2], b: [Complex64; 2]) -> f64 {
    a[0].re * b[0].re + a[0].im * b[0].im + a[1].re * b[1].re + a[1].im * b[1].im
}

/// Spinor pair `Σ_k x_k ψ^k` obtained by contracting the vector slot with `x`.
#[inline]
pub fn contract(x: &[f64], v: &[Complex64]) -> [Complex64; 2] {
    let q = x.len();
    [dot_rc(x, &v[..q]), dot_rc(x, &v[q..])]
}

/// Spinor pair `ψ^k` (component k of both slots).
#[inline]
pub fn component(v: &[Complex64], q: usize, k: usize) -> [Complex64; 2] {
    [v[k], v[q + k]]
}

#[allow(dead_code)]
pub(crate) fn real_norm(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_grid, SpinStructure};
    use crate::target::Target;
    use std::f64::consts::PI;

    fn mat_mul(a: &Gamma, b: &Gamma) -> Gamma {
        let mut c = [[ZERO; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        c
    }

    fn grid(n: usize, spin: SpinStructure) -> GridSpec {
        make_grid(2.0 * PI, 2.0 * PI, n, n, spin).unwrap()
    }

    fn smooth_spinor(g: GridSpec, q: usize, seed: f64) -> VectorSpinorField {
        let (d1, d2) = (0.5 * g.spin.delta1 as f64, 0.5 * g.spin.delta2 as f64);
        VectorSpinorField::from_fn(g, q, |x, y, v| {
            let ph = Complex64::from_polar(1.0, d1 * x + d2 * y);
            for (c, val) in v.iter_mut().enumerate() {
                let c = c as f64 + seed;
                *val = ph * Complex64::new((x + c).sin() + 0.3 * (2.0 * y - c).cos(), (x * 0.0 + y + 0.7 * c).cos());
            }
        })
    }

    fn sphere_map(g: GridSpec) -> MapField {
        MapField::new(g, Target::Sphere { q: 3 }, |x, y, v| {
            let (a, b) = (0.4 * x.sin(), 0.3 * (y + 0.5).cos());
            let n = (a * a + b * b + 1.0).sqrt();
            v.copy_from_slice(&[a / n, b / n, 1.0 / n]);
        })
    }

    #[test]
    fn clifford_relations() {
        let id: Gamma = [[Complex64::new(1.0, 0.0), ZERO], [ZERO, Complex64::new(1.0, 0.0)]];
        for (a, b) in [(Axis::X, Axis::X), (Axis::X, Axis::Y), (Axis::Y, Axis::Y)] {
            let (ga, gb) = (CLIFFORD.gamma(a), CLIFFORD.gamma(b));
            let ab = mat_mul(ga, gb);
            let ba = mat_mul(gb, ga);
            for i in 0..2 {
                for j in 0..2 {
                    let expect = if a == b { id[i][j] * -2.0 } else { ZERO };
                    assert_eq!(ab[i][j] + ba[i][j], expect);
                    // anti-Hermitian
                    assert_eq!(ga[i][j], -ga[j][i].conj());
                }
            }
        }
        // gamma_pair agrees with the matrices
        let (a, b) = (Complex64::new(0.3, -1.0), Complex64::new(2.0, 0.5));
        for axis in Axis::BOTH {
            let g = CLIFFORD.gamma(axis);
            let (x, y) = gamma_pair(axis, a, b);
            assert_eq!(x, g[0][0] * a + g[0][1] * b);
            assert_eq!(y, g[1][0] * a + g[1][1] * b);
        }
    }

    #[test]
    fn clifford_mul_pointwise_identities() {
        let g = grid(8, SpinStructure::PERIODIC);
        let psi = smooth_spinor(g, 2, 0.0);
        let chi = smooth_spinor(g, 2, 1.3);
        let neg = clifford_mul(Axis::X, &clifford_mul(Axis::X, &psi));
        assert_eq!(neg.field, psi.field.scaled(-1.0));
        let a = clifford_mul(Axis::X, &clifford_mul(Axis::Y, &psi));
        let b = clifford_mul(Axis::Y, &clifford_mul(Axis::X, &psi));
        assert_eq!(a.field, b.field.scaled(-1.0));
        for axis in Axis::BOTH {
            let gchi = clifford_mul(axis, &chi);
            let gpsi = clifford_mul(axis, &psi);
            for p in 0..g.len() {
                let s: f64 = psi.at(p).iter().zip(gchi.at(p)).map(|(x, y)| x.re * y.re + x.im * y.im).sum::<f64>()
                    + gpsi.at(p).iter().zip(chi.at(p)).map(|(x, y)| x.re * y.re + x.im * y.im).sum::<f64>();
                assert!(s.abs() < 1e-14);
            }
        }
    }

    #[test]
    fn dirac_of_constant_and_of_modes() {
        let g = grid(16, SpinStructure::PERIODIC);
        let c = VectorSpinorField::from_fn(g, 2, |_, _, v| v.fill(Complex64::new(0.5, -0.25)));
        assert!(dirac_flat(&c).is_zero());

        let spin = SpinStructure::new(1, 1).unwrap();
        let mut errs = vec![];
        for n in [32, 64] {
            let g = grid(n, spin);
            let xi: (f64, f64) = (1.5, -0.5);
            let lam = (xi.0 * xi.0 + xi.1 * xi.1).sqrt();
            let s = mode_spinor(xi, lam);
            let psi = VectorSpinorField::from_fn(g, 1, |x, y, v| {
                let e = Complex64::from_polar(1.0, xi.0 * x + xi.1 * y);
                v[0] = s[0] * e;
                v[1] = s[1] * e;
            });
            let d = dirac_flat(&psi);
            errs.push(d.field.sub(&psi.field.scaled(lam)).max_abs());
        }
        assert!(errs[0] < 0.05);
        let r = errs[0] / errs[1];
        assert!((3.2..=4.8).contains(&r), "{r}");
    }

    #[test]
    fn dirac_squared_is_minus_laplacian() {
        let mut errs = vec![];
        for n in [32, 64] {
            let g = grid(n, SpinStructure::new(0, 1).unwrap());
            let psi = smooth_spinor(g, 1, 0.2);
            let dd = dirac_flat(&dirac_flat(&psi));
            let lap = laplacian(&psi.field);
            let mut sum = dd.field.clone();
            sum.axpy(1.0, &lap);
            errs.push(sum.norm_l2());
        }
        let r = errs[0] / errs[1];
        assert!((3.2..=4.8).contains(&r), "{r}");
    }

    #[test]
    fn dirac_self_adjoint_every_spin_structure() {
        for spin in SpinStructure::all() {
            let g = grid(32, spin);
            let psi = smooth_spinor(g, 2, 0.0);
            let chi = smooth_spinor(g, 2, 2.1);
            let a = dirac_flat(&psi).field.inner(&chi.field);
            let b = psi.field.inner(&dirac_flat(&chi).field);
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "{spin}: {a} vs {b}");
        }
    }

    #[test]
    fn twisted_operators_on_flat_and_constant_targets() {
        let g = grid(16, SpinStructure::new(1, 0).unwrap());
        let psi = smooth_spinor(g, 2, 0.4);
        let flat = MapField::new(g, Target::FlatTorus { q: 2 }, |x, y, v| v.copy_from_slice(&[x, y]));
        assert_eq!(twisted_dirac(&psi, &flat).unwrap(), dirac_flat(&psi));
        assert_eq!(twisted_conn_laplacian(&psi, &flat).unwrap().field, laplacian(&psi.field));

        let p = [0.0, 0.6, 0.8];
        let u = MapField::constant(g, Target::Sphere { q: 3 }, &p);
        let psi3 = tangency_project(&smooth_spinor(g, 3, 0.1), &u);
        let d = twisted_dirac(&psi3, &u).unwrap();
        assert_eq!(d, tangency_project(&dirac_flat(&psi3), &u));

        let c = tangency_project(&VectorSpinorField::from_fn(g, 3, |_, _, v| v.fill(Complex64::new(1.0, 2.0))), &u);
        let g0 = grid(16, SpinStructure::PERIODIC);
        let u0 = MapField::constant(g0, Target::Sphere { q: 3 }, &p);
        let c0 = VectorSpinorField { field: Field { grid: g0, ..c.field.clone() }, q: 3 };
        assert!(twisted_conn_laplacian(&c0, &u0).unwrap().field.max_abs() < 1e-14);
    }

    #[test]
    fn twisted_dirac_self_adjoint_on_sphere_target() {
        for spin in SpinStructure::all() {
            let g = grid(32, spin);
            let u = sphere_map(g);
            let psi = tangency_project(&smooth_spinor(g, 3, 0.0), &u);
            let chi = tangency_project(&smooth_spinor(g, 3, 1.7), &u);
            let a = twisted_dirac(&psi, &u).unwrap().field.inner(&chi.field);
            let b = psi.field.inner(&twisted_dirac(&chi, &u).unwrap().field);
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn connection_laplacian_integrates_by_parts() {
        let mut gaps = vec![];
        for n in [32, 64] {
            let g = grid(n, SpinStructure::new(1, 1).unwrap());
            let u = sphere_map(g);
            let psi = tangency_project(&smooth_spinor(g, 3, 0.3), &u);
            let lap = twisted_conn_laplacian(&psi, &u).unwrap();
            let lhs = lap.field.inner(&psi.field);
            // exact against the edge form
            let edge: f64 = Axis::BOTH
                .iter()
                .map(|a| {
                    let e = edge_covariant_diff(&psi, &u, *a);
                    psi.field.forward_diff(*a).inner(&e.field)
                })
                .sum();
            assert!((lhs + edge).abs() < 1e-11 * edge.abs());
            // O(h²) against the pointwise centered covariant derivative
            let cov: f64 = Axis::BOTH.iter().map(|a| covariant_derivative(&psi, &u, *a).l2_sq()).sum();
            gaps.push((lhs + cov).abs() / cov);
        }
        assert!(gaps[0] < 0.05);
        assert!(gaps[0] / gaps[1] > 3.0, "{gaps:?}");
    }

    #[test]
    fn projection_cases() {
        let g = grid(8, SpinStructure::PERIODIC);
        let u = sphere_map(g);
        let psi = tangency_project(&smooth_spinor(g, 3, 0.9), &u);
        assert!(psi.tangency_residual(&u) < 1e-12 * psi.sup_sq().sqrt());
        let again = tangency_project(&psi, &u);
        assert!(again.field.sub(&psi.field).max_abs() < 1e-15);
        let normal = VectorSpinorField::from_fn(g, 3, |x, y, v| {
            let p = g.snap(x, y);
            let up = u.at(p);
            for k in 0..3 {
                v[k] = Complex64::new(up[k], 0.0) * Complex64::new(0.3, 0.1);
                v[3 + k] = Complex64::new(up[k], 0.0) * Complex64::new(-1.0, 2.0);
            }
        });
        assert!(tangency_project(&normal, &u).field.max_abs() < 1e-15);
        let bad = smooth_spinor(g, 3, 0.9);
        assert!(matches!(twisted_dirac(&bad, &u), Err(Error::NotTangent { .. })));
    }
}
