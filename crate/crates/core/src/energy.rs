//! Energies, densities, the tension field and the curvature terms.
//!
//! Discrete conventions. The Dirichlet energy is `½ Σ_α Σ |D⁺_α u|²`, the
//! spinor gradient energy `½ Σ_α Σ Re<D⁺_α ψ, Π̄ D⁺_α ψ>` (edge form, see
//! [`edge_covariant_diff`]); both sums carry the cell area. With these
//! choices `Π_u Δu` and `εΔ̃ψ - D̸ψ` are exact discrete gradients, and the
//! lower bound `E_ε ≥ -∫|ψ|²/(4ε)` holds on the grid as well.

use num_complex::Complex64;

use crate::clifford::{
    component, contract, covariant_derivative, edge_covariant_diff, gamma_pair, spinor_dot,
    twisted_conn_laplacian_unchecked, twisted_dirac_unchecked, VectorSpinorField,
};
use crate::error::{Error, Result};
use crate::flow::FlowState;
use crate::grid::{ball_mask, Axis, Field, ScalarField};
use crate::target::MapField;

/// Tolerance on the imaginary part of `∫<ψ, D̸ψ>`, relative to `‖ψ‖‖D̸ψ‖`.
pub const DIRAC_IMAG_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EnergyReport {
    pub dirichlet: f64,
    pub dirac_pairing: f64,
    pub spinor_gradient: f64,
    pub e_eps: f64,
    pub f_global: f64,
    pub psi_l2: f64,
    pub psi_l4: f64,
    pub psi_sup: f64,
    /// Discarded imaginary part of the Dirac pairing.
    pub dirac_imag: f64,
}

impl EnergyReport {
    /// `-∫|ψ|²/(4ε)`.
    pub fn lower_bound(&self, eps: f64) -> f64 {
        -self.psi_l2 / (4.0 * eps)
    }
}

/// `|D⁺_α u|²` at each point (the edge leaving the point along `axis`).
pub fn dirichlet_edges(u: &MapField, axis: Axis) -> ScalarField {
    let d = u.forward_diff(axis);
    let g = *u.grid();
    let mut out = ScalarField::zeros(g, 1, false);
    for p in 0..g.len() {
        out.data[p] = d.at(p).iter().map(|v| v * v).sum();
    }
    out
}

/// `Re<D⁺_α ψ, Π̄ D⁺_α ψ>` at each point.
pub fn spinor_edges(psi: &VectorSpinorField, u: &MapField, axis: Axis) -> ScalarField {
    let g = *u.grid();
    let d = psi.field.forward_diff(axis);
    let e = edge_covariant_diff(psi, u, axis);
    let mut out = ScalarField::zeros(g, 1, false);
    for p in 0..g.len() {
        out.data[p] = d.at(p).iter().zip(e.field.at(p)).map(|(a, b)| a.re * b.re + a.im * b.im).sum();
    }
    out
}

/// Average of the two edges meeting at each point along `axis`.
fn edges_to_points(e: &ScalarField, axis: Axis) -> ScalarField {
    let g = e.grid;
    let mut out = e.clone();
    for p in 0..g.len() {
        let (m, _) = g.neighbor(p, axis, false);
        out.data[p] = 0.5 * (e.data[p] + e.data[m]);
    }
    out
}

/// Pointwise `|du|²`, the edge densities averaged onto points.
pub fn du_sq_density(u: &MapField) -> ScalarField {
    let mut out = edges_to_points(&dirichlet_edges(u, Axis::X), Axis::X);
    out.axpy(1.0, &edges_to_points(&dirichlet_edges(u, Axis::Y), Axis::Y));
    out
}

/// Pointwise `|∇̃ψ|²`, edge densities averaged onto points.
pub fn spinor_grad_density(psi: &VectorSpinorField, u: &MapField) -> ScalarField {
    let mut out = edges_to_points(&spinor_edges(psi, u, Axis::X), Axis::X);
    out.axpy(1.0, &edges_to_points(&spinor_edges(psi, u, Axis::Y), Axis::Y));
    out
}

/// Density of `F`: `½(|dφ|² + ε|∇̃ψ|²)`; its integral is `F_global`.
pub fn f_density(state: &FlowState) -> ScalarField {
    let mut out = du_sq_density(&state.u);
    if !state.psi.is_zero() {
        out.axpy(state.eps, &spinor_grad_density(&state.psi, &state.u));
    }
    out.scaled(0.5)
}

/// Energy report of `(u, ψ)` without constraint validation.
pub(crate) fn energy_unchecked(u: &MapField, psi: &VectorSpinorField, eps: f64) -> EnergyReport {
    let g = *u.grid();
    let area = g.cell_area();
    let dirichlet = 0.5 * Axis::BOTH.iter().map(|a| dirichlet_edges(u, *a).integral()).sum::<f64>();
    let mut r = EnergyReport { dirichlet, e_eps: dirichlet, f_global: dirichlet, ..Default::default() };
    if psi.is_zero() {
        return r;
    }
    let d = twisted_dirac_unchecked(psi, u);
    let pairing =
        psi.field.data.iter().zip(&d.field.data).fold(Complex64::new(0.0, 0.0), |s, (a, b)| s + a.conj() * b) * area;
    r.dirac_pairing = 0.5 * pairing.re;
    r.dirac_imag = 0.5 * pairing.im;
    r.spinor_gradient = 0.5 * Axis::BOTH.iter().map(|a| spinor_edges(psi, u, *a).integral()).sum::<f64>();
    r.psi_l2 = psi.l2_sq();
    r.psi_l4 = psi.l4_4();
    r.psi_sup = psi.sup_sq();
    r.e_eps = r.dirichlet + r.dirac_pairing + eps * r.spinor_gradient;
    r.f_global = r.dirichlet + eps * r.spinor_gradient;
    r
}

/// `E_ε` and its parts. Rejects states off the constraints, a non-real Dirac
/// pairing, and a violation of the lower bound.
pub fn energy_regularized(state: &FlowState) -> Result<EnergyReport> {
    state.check_constraints()?;
    let r = energy_unchecked(&state.u, &state.psi, state.eps);
    if !r.e_eps.is_finite() {
        return Err(Error::NonFinite { term: "energy" });
    }
    let scale = (r.psi_l2 * twisted_dirac_unchecked(&state.psi, &state.u).l2_sq()).sqrt();
    if r.dirac_imag.abs() > DIRAC_IMAG_TOL * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::Incompatible(format!("imaginary Dirac pairing {:e}", r.dirac_imag)));
    }
    let bound = r.lower_bound(state.eps);
    if r.e_eps < bound - 1e-12 * (r.f_global + r.psi_l2 / state.eps).max(1.0) {
        return Err(Error::Incompatible(format!("energy {} below the lower bound {}", r.e_eps, bound)));
    }
    Ok(r)
}

/// `½∫_{B_R(center)}(|dφ|² + ε|∇̃ψ|²)`; the center snaps to the nearest grid point.
#[allow(non_snake_case)]
pub fn local_F(state: &FlowState, center: (f64, f64), radius: f64) -> Result<f64> {
    let mask = ball_mask(state.u.grid(), center, radius)?;
    let f = f_density(state);
    Ok(mask.inner(&f))
}

/// Tension field `τ(u) = Π_u Δu`.
pub fn tension(u: &MapField) -> Field<f64> {
    let mut lap = u.laplacian();
    if !u.target.is_flat() {
        for p in 0..u.grid().len() {
            u.target.project_tangent(u.at(p), lap.at_mut(p));
        }
    }
    lap
}

/// Per-point inputs of the curvature terms: centered `du_α` and the spinor pairs
/// `a_α = du_α·ψ`.
pub(crate) struct Contractions {
    pub du: [Field<f64>; 2],
}

impl Contractions {
    pub fn new(u: &MapField) -> Self {
        Self { du: [u.differential(Axis::X), u.differential(Axis::Y)] }
    }

    #[inline]
    pub fn a(&self, alpha: usize, p: usize, v: &[Complex64]) -> [Complex64; 2] {
        contract(self.du[alpha].at(p), v)
    }
}

/// `R(φ,ψ)`, the ψ-quadratic term of the map equation, as a tangent field.
///
/// With `R^N(X,Y)Z = <Y,Z>X - <X,Z>Y` this is `½ R^N(ψ, γ_α·ψ) du(e_α)`, the
/// sign that makes `τ - R - εR_c` the negative gradient of `E_ε`. Componentwise
/// `R^i = -Σ_α Re<γ_α ψ^i, du_α·ψ>`.
#[allow(non_snake_case)]
pub fn curvature_R(u: &MapField, psi: &VectorSpinorField) -> Field<f64> {
    let g = *u.grid();
    let q = u.q();
    let mut out = Field::zeros(g, q, false);
    if u.target.is_flat() || psi.is_zero() {
        return out;
    }
    let c = Contractions::new(u);
    for p in 0..g.len() {
        let v = psi.at(p);
        let o = out.at_mut(p);
        for (alpha, axis) in Axis::BOTH.into_iter().enumerate() {
            let a = c.a(alpha, p, v);
            for (i, oi) in o.iter_mut().enumerate() {
                let (x, y) = gamma_pair(axis, v[i], v[q + i]);
                *oi -= spinor_dot([x, y], a);
            }
        }
    }
    out
}

/// `R_c(φ,ψ) = R^N(∇̃_{e_α}ψ, ψ) du(e_α)`, componentwise
/// `Re<(∇̃_α ψ)^i, du_α·ψ> - Re<du_α·∇̃_α ψ, ψ^i>`.
#[allow(non_snake_case)]
pub fn curvature_Rc(u: &MapField, psi: &VectorSpinorField) -> Field<f64> {
    let g = *u.grid();
    let q = u.q();
    let mut out = Field::zeros(g, q, false);
    if u.target.is_flat() || psi.is_zero() {
        return out;
    }
    let c = Contractions::new(u);
    for (alpha, axis) in Axis::BOTH.into_iter().enumerate() {
        let nabla = covariant_derivative(psi, u, axis);
        for p in 0..g.len() {
            let (v, w) = (psi.at(p), nabla.at(p));
            let a = c.a(alpha, p, v);
            let b = c.a(alpha, p, w);
            for (i, oi) in out.at_mut(p).iter_mut().enumerate() {
                *oi += spinor_dot(component(w, q, i), a) - spinor_dot(b, component(v, q, i));
            }
        }
    }
    out
}

/// Left-hand sides of the Euler-Lagrange system of `E_ε`:
/// `τ - R - εR_c` and `εΔ̃ψ - D̸ψ`.
pub fn euler_lagrange(u: &MapField, psi: &VectorSpinorField, eps: f64) -> (Field<f64>, VectorSpinorField) {
    let mut eu = tension(u);
    let mut epsi = VectorSpinorField::zeros(*u.grid(), u.q());
    if !psi.is_zero() {
        eu.axpy(-1.0, &curvature_R(u, psi));
        eu.axpy(-eps, &curvature_Rc(u, psi));
        epsi = twisted_conn_laplacian_unchecked(psi, u).map_field(|f| f.scaled(eps));
        epsi.field.axpy(-1.0, &twisted_dirac_unchecked(psi, u).field);
    }
    (eu, epsi)
}

/// L² norms of the Euler-Lagrange residuals `(u, ψ)`.
pub fn el_residuals(state: &FlowState) -> Result<(f64, f64)> {
    state.check_constraints()?;
    let (eu, epsi) = euler_lagrange(&state.u, &state.psi, state.eps);
    Ok((eu.norm_l2(), epsi.field.norm_l2()))
}
