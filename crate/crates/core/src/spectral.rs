//! Independent reference computations: Fourier solutions of the decoupled
//! spinor flow, the spectral ε-threshold, gradient checks of the stepper
//! against the energy, Bochner identities, Sobolev ratios and the Appendix
//! max-principle demo.

use num_complex::Complex64;

use crate::clifford::{
    contract, covariant_derivative, edge_covariant_diff, twisted_conn_laplacian_unchecked, VectorSpinorField,
};
use crate::energy::{energy_unchecked, tension};
use crate::error::{Error, Result};
use crate::flow::{rhs, tangential, FlowState};
use crate::fourier::{ball_sums, signed_index, Fft2};
use crate::grid::{partial, Axis, Field, GridSpec, ScalarField, SpinStructure};
use crate::target::{dot, MapField, Target};

/// Frequencies allowed by a spin structure on the torus `[0,Lx) x [0,Ly)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModeSet {
    pub lx: f64,
    pub ly: f64,
    pub spin: SpinStructure,
    pub min_nonzero: f64,
    pub has_zero_mode: bool,
}

impl ModeSet {
    pub fn new(lx: f64, ly: f64, spin: SpinStructure) -> Self {
        let mut min = f64::INFINITY;
        let mut zero = false;
        for k1 in -2i32..=2 {
            for k2 in -2i32..=2 {
                let (a, b) = Self::xi_of(lx, ly, spin, k1 as f64, k2 as f64);
                let r = a.hypot(b);
                if r == 0.0 {
                    zero = true;
                } else {
                    min = min.min(r);
                }
            }
        }
        Self { lx, ly, spin, min_nonzero: min, has_zero_mode: zero }
    }

    pub fn for_grid(grid: &GridSpec) -> Self {
        Self::new(grid.lx, grid.ly, grid.spin)
    }

    fn xi_of(lx: f64, ly: f64, spin: SpinStructure, k1: f64, k2: f64) -> (f64, f64) {
        let tau = 2.0 * std::f64::consts::PI;
        (tau * (k1 + 0.5 * spin.delta1 as f64) / lx, tau * (k2 + 0.5 * spin.delta2 as f64) / ly)
    }

    /// `ξ = 2π(k + δ/2)/L`.
    pub fn xi(&self, k1: i64, k2: i64) -> (f64, f64) {
        Self::xi_of(self.lx, self.ly, self.spin, k1 as f64, k2 as f64)
    }

    /// A frequency of minimal nonzero length.
    pub fn xi_min(&self) -> (f64, f64) {
        let mut best = (0.0, 0.0);
        let mut r = f64::INFINITY;
        for k1 in -2..=2 {
            for k2 in -2..=2 {
                let x = self.xi(k1, k2);
                let n = x.0.hypot(x.1);
                if n > 0.0 && n < r - 1e-15 {
                    r = n;
                    best = x;
                }
            }
        }
        best
    }
}

/// `ε* = 1/min|ξ|`: above it every nonzero mode of `∂_t ψ = εΔψ - ∂̸ψ`
/// decays, since the branch rates are `-ε|ξ|² ± |ξ|`.
pub fn epsilon_threshold(grid: &GridSpec) -> f64 {
    1.0 / ModeSet::for_grid(grid).min_nonzero
}

/// Which Fourier symbol the oracle uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Symbol {
    /// `∂ → iξ`, `Δ → -|ξ|²`.
    Continuum,
    /// Symbols of the centered difference and the 5-point Laplacian:
    /// `∂ → i sin(ξh)/h`, `Δ → -Σ (2 sin(ξh/2)/h)²`.
    Discrete,
}

fn phase_factors(grid: &GridSpec) -> Vec<Complex64> {
    let (d1, d2) = (grid.spin.delta1 as f64, grid.spin.delta2 as f64);
    (0..grid.len())
        .map(|p| {
            let (i, j) = ((p % grid.nx) as f64, (p / grid.nx) as f64);
            Complex64::from_polar(1.0, -std::f64::consts::PI * (d1 * i / grid.nx as f64 + d2 * j / grid.ny as f64))
        })
        .collect()
}

/// Exact solution of the decoupled spinor flow `∂_t ψ = εΔψ - ∂̸ψ` (flat
/// target) at time `t`, continuum symbol.
pub fn decoupled_exact(psi0: &VectorSpinorField, target: Target, eps: f64, t: f64) -> Result<VectorSpinorField> {
    decoupled_exact_with(psi0, target, eps, t, Symbol::Continuum)
}

/// Per mode `ψ̂(t) = exp(t(-ε|ξ|² + σ·ξ)) ψ̂(0)`, where `-σ·ξ` is the symbol of `∂̸`.
pub fn decoupled_exact_with(
    psi0: &VectorSpinorField,
    target: Target,
    eps: f64,
    t: f64,
    symbol: Symbol,
) -> Result<VectorSpinorField> {
    if !target.is_flat() {
        return Err(Error::Incompatible("decoupled oracle needs a flat target".into()));
    }
    let g = *psi0.grid();
    let q = psi0.q;
    let fft = Fft2::new(&g);
    let phase = phase_factors(&g);
    let modes = ModeSet::for_grid(&g);

    let mut out = VectorSpinorField::zeros(g, q);
    for k in 0..q {
        let mut slots: [Vec<Complex64>; 2] =
            [0, 1].map(|s| (0..g.len()).map(|p| psi0.at(p)[s * q + k] * phase[p]).collect::<Vec<_>>());
        for s in slots.iter_mut() {
            fft.forward(s);
        }
        for p in 0..g.len() {
            let (k1, k2) = (signed_index(p % g.nx, g.nx), signed_index(p / g.nx, g.ny));
            let xi = modes.xi(k1 as i64, k2 as i64);
            let (eta, lap) = match symbol {
                Symbol::Continuum => (xi, xi.0 * xi.0 + xi.1 * xi.1),
                Symbol::Discrete => {
                    let s = |x: f64, h: f64| ((x * h).sin() / h, (2.0 * (0.5 * x * h).sin() / h).powi(2));
                    let (e1, l1) = s(xi.0, g.hx);
                    let (e2, l2) = s(xi.1, g.hy);
                    ((e1, e2), l1 + l2)
                }
            };
            let r = eta.0.hypot(eta.1);
            let grow = (t * (r - eps * lap)).exp();
            let decay = (t * (-r - eps * lap)).exp();
            let c = 0.5 * (grow + decay);
            // sinh(t r)/r, continuous at r = 0
            let sh = if r > 0.0 { 0.5 * (grow - decay) / r } else { t * (-eps * lap * t).exp() };
            let off_up = Complex64::new(eta.0, -eta.1) * sh;
            let off_dn = Complex64::new(eta.0, eta.1) * sh;
            let (a, b) = (slots[0][p], slots[1][p]);
            slots[0][p] = a * c + b * off_up;
            slots[1][p] = a * off_dn + b * c;
        }
        for s in slots.iter_mut() {
            fft.inverse(s);
        }
        for p in 0..g.len() {
            let v = out.at_mut(p);
            v[k] = slots[0][p] / phase[p];
            v[q + k] = slots[1][p] / phase[p];
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradientRow {
    pub s: f64,
    /// Centered difference `(E(+s) - E(-s)) / 2s`.
    pub fd: f64,
    /// `-<(Π∂_t u, ∇̃_t ψ), variation>`.
    pub predicted: f64,
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradientReport {
    pub rows: Vec<GradientRow>,
    /// `|fd(s → 0) - predicted|`, Richardson-extrapolated from the two smallest steps.
    pub gap: f64,
    /// `‖velocity‖ · ‖variation‖`.
    pub scale: f64,
}

impl GradientReport {
    pub fn relative_gap(&self) -> f64 {
        if self.scale == 0.0 {
            0.0
        } else {
            self.gap / self.scale
        }
    }
}

fn perturbed(
    state: &FlowState,
    v: &Field<f64>,
    w: &VectorSpinorField,
    s: f64,
) -> Result<(MapField, VectorSpinorField)> {
    let mut uf = state.u.field.clone();
    uf.axpy(s, v);
    let u = MapField { field: uf, target: state.u.target }.projected()?;
    let mut psi = state.psi.clone();
    psi.field.axpy(s, &w.field);
    crate::clifford::project_in_place(&mut psi, &u);
    Ok((u, psi))
}

/// Compare the energy's directional derivative along `(v, w)` with the flow velocity.
/// The variation is applied as `u_s = proj(u + s v)`, `ψ_s = Π_{u_s}(ψ + s w)`.
pub fn gradient_check(
    state: &FlowState,
    variation: (&Field<f64>, &VectorSpinorField),
    s_values: &[f64],
) -> Result<GradientReport> {
    let (v, w) = variation;
    let (u_t, psi_t) = rhs(state)?;
    let (a, b) = tangential(&state.u, &u_t, &psi_t);
    let predicted = -(a.inner(v) + b.field.inner(&w.field));
    let scale = (a.inner(&a) + b.field.inner(&b.field)).sqrt() * (v.inner(v) + w.field.inner(&w.field)).sqrt();
    let mut rows = Vec::with_capacity(s_values.len());
    for &s in s_values {
        let (up, pp) = perturbed(state, v, w, s)?;
        let (um, pm) = perturbed(state, v, w, -s)?;
        let ep = energy_unchecked(&up, &pp, state.eps).e_eps;
        let em = energy_unchecked(&um, &pm, state.eps).e_eps;
        let fd = (ep - em) / (2.0 * s);
        rows.push(GradientRow { s, fd, predicted, residual: fd - predicted });
    }
    let gap = match rows.len() {
        0 => 0.0,
        1 => rows[0].residual.abs(),
        n => {
            let (r1, r2) = (&rows[n - 2], &rows[n - 1]);
            let (s1, s2) = (r1.s * r1.s, r2.s * r2.s);
            let fd0 = (s1 * r2.fd - s2 * r1.fd) / (s1 - s2);
            (fd0 - predicted).abs()
        }
    };
    Ok(GradientReport { rows, gap, scale })
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BochnerReport {
    pub lhs: f64,
    pub rhs: f64,
    pub gap: f64,
}

impl BochnerReport {
    fn new(lhs: f64, rhs: f64) -> Self {
        Self { lhs, rhs, gap: lhs - rhs }
    }
}

/// Second derivatives `∂_α ∂_β u` of the ambient map: compact 3-point stencil
/// on the diagonal, centered differences composed off the diagonal.
fn hessian(u: &MapField) -> [[Field<f64>; 2]; 2] {
    let dx = u.differential(Axis::X);
    let xy = partial(&dx, Axis::Y);
    [[u.second_diff(Axis::X), xy.clone()], [xy, u.second_diff(Axis::Y)]]
}

/// `∫|τ(u)|²` against `∫|∇du|² - Σ_{α,β} ∫<R^N(du_α, du_β) du_β, du_α>`.
///
/// With `R^N(X,Y)Z = <Y,Z>X - <X,Z>Y` the curvature integrand is the
/// sectional term `|du_α|²|du_β|² - <du_α,du_β>²`.
pub fn bochner_residual_phi(u: &MapField) -> BochnerReport {
    let g = *u.grid();
    let q = u.q();
    let tau = tension(u);
    let lhs = tau.inner(&tau);
    let hess = hessian(u);
    let mut grad2 = 0.0;
    let mut x = vec![0.0; q];
    for p in 0..g.len() {
        for row in &hess {
            for h in row {
                x.copy_from_slice(h.at(p));
                u.target.project_tangent(u.at(p), &mut x);
                grad2 += dot(&x, &x);
            }
        }
    }
    grad2 *= g.cell_area();
    let mut curv = 0.0;
    if !u.target.is_flat() {
        let (dx, dy) = (u.differential(Axis::X), u.differential(Axis::Y));
        for p in 0..g.len() {
            let (a, b) = (dx.at(p), dy.at(p));
            curv += 2.0 * (dot(a, a) * dot(b, b) - dot(a, b).powi(2));
        }
        curv *= g.cell_area();
    }
    BochnerReport::new(lhs, grad2 - curv)
}

/// `R(e_α, e_β)Z = (du_β·Z) du_α - (du_α·Z) du_β`, the pulled-back curvature
/// acting on the vector index of one point value `z`.
fn bundle_curvature(da: &[f64], db: &[f64], z: &[Complex64], out: &mut [Complex64]) {
    let q = da.len();
    let (cb, ca) = (contract(db, z), contract(da, z));
    for k in 0..q {
        out[k] = cb[0] * da[k] - ca[0] * db[k];
        out[q + k] = cb[1] * da[k] - ca[1] * db[k];
    }
}

fn re_dot(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.re * y.re + x.im * y.im).sum()
}

/// `∫|Δ̃ψ|²` against `∫|∇̃²ψ|² + ∫<R(e_α,e_β)ψ, ∇̃_β∇̃_αψ> + ∫<R(e_β,e_α)∇̃_βψ, ∇̃_αψ>`.
pub fn bochner_residual_psi(psi: &VectorSpinorField, u: &MapField) -> Result<BochnerReport> {
    psi.check_tangent(u, crate::clifford::TANGENCY_TOL)?;
    let g = *u.grid();
    let q = u.q();
    let lap = twisted_conn_laplacian_unchecked(psi, u);
    let lhs = lap.l2_sq();
    let first = [covariant_derivative(psi, u, Axis::X), covariant_derivative(psi, u, Axis::Y)];
    // second[β][α] = ∇̃_β ∇̃_α ψ; diagonal in the compact edge form
    let diag = |axis: Axis| {
        let e = edge_covariant_diff(psi, u, axis);
        let mut d = VectorSpinorField::zeros(g, q);
        let inv = 1.0 / g.spacing(axis);
        for p in 0..g.len() {
            let (m, wrapped) = g.neighbor(p, axis, false);
            let s = g.phase(axis, wrapped, true);
            for c in 0..2 * q {
                d.field.data[p * 2 * q + c] = (e.field.data[p * 2 * q + c] - e.field.data[m * 2 * q + c] * s) * inv;
            }
        }
        crate::clifford::tangency_project(&d, u)
    };
    let second = [
        [diag(Axis::X), covariant_derivative(&first[1], u, Axis::X)],
        [covariant_derivative(&first[0], u, Axis::Y), diag(Axis::Y)],
    ];
    let mut grad2 = 0.0;
    for row in &second {
        for f in row {
            grad2 += f.l2_sq();
        }
    }
    let mut curv = 0.0;
    if !u.target.is_flat() {
        let du = [u.differential(Axis::X), u.differential(Axis::Y)];
        let mut r = vec![Complex64::new(0.0, 0.0); 2 * q];
        for p in 0..g.len() {
            for (a, b) in [(0usize, 1usize), (1, 0)] {
                // <R(e_a,e_b)ψ, ∇̃_b∇̃_a ψ>
                bundle_curvature(du[a].at(p), du[b].at(p), psi.at(p), &mut r);
                curv += re_dot(&r, second[b][a].at(p));
                // <R(e_b,e_a)∇̃_b ψ, ∇̃_a ψ>
                bundle_curvature(du[b].at(p), du[a].at(p), first[b].at(p), &mut r);
                curv += re_dot(&r, first[a].at(p));
            }
        }
        curv *= g.cell_area();
    }
    Ok(BochnerReport::new(lhs, grad2 + curv))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SobolevReport {
    /// `∫v⁴ / (∫v² ∫|∇v|²)` per sample after mean subtraction.
    pub ratios: Vec<f64>,
    /// `∫|∇v|⁴ / (sup_x ∫_{B_R(x)}|∇v|² · (∫|∇²v|² + R⁻²∫|∇v|²))` per sample.
    pub local_ratios: Vec<f64>,
    pub max_ratio: f64,
    pub max_local_ratio: f64,
    /// Samples without gradient (constants), skipped.
    pub skipped: usize,
}

/// Empirical constants of the global and local Sobolev inequalities.
pub fn sobolev_ratio(samples: &[ScalarField], radius: f64) -> Result<SobolevReport> {
    let mut ratios = vec![];
    let mut local_ratios = vec![];
    let mut skipped = 0;
    for v in samples {
        let g = v.grid;
        let mean = v.integral() / g.volume();
        let v0 = Field { data: v.data.iter().map(|x| x - mean).collect(), ..v.clone() };
        let grads = [v0.forward_diff(Axis::X), v0.forward_diff(Axis::Y)];
        let grad_sq: f64 = grads.iter().map(|d| d.inner(d)).sum();
        if grad_sq <= 1e-300 {
            skipped += 1;
            continue;
        }
        let l2 = v0.inner(&v0);
        let l4: f64 = v0.data.iter().map(|x| x.powi(4)).sum::<f64>() * g.cell_area();
        ratios.push(l4 / (l2 * grad_sq));

        let c = [partial(&v0, Axis::X), partial(&v0, Axis::Y)];
        let dens = ScalarField {
            data: (0..g.len()).map(|p| c[0].data[p].powi(2) + c[1].data[p].powi(2)).collect(),
            ..v0.clone()
        };
        let grad4: f64 = dens.data.iter().map(|x| x * x).sum::<f64>() * g.cell_area();
        let sup_ball = ball_sums(&dens, radius)?.data.iter().cloned().fold(0.0, f64::max);
        let xy = partial(&c[0], Axis::Y);
        let hess: f64 = crate::grid::second_diff(&v0, Axis::X).inner(&crate::grid::second_diff(&v0, Axis::X))
            + crate::grid::second_diff(&v0, Axis::Y).inner(&crate::grid::second_diff(&v0, Axis::Y))
            + 2.0 * xy.inner(&xy);
        let dens_int = dens.integral();
        local_ratios.push(grad4 / (sup_ball * (hess + dens_int / (radius * radius))));
    }
    let max = |v: &[f64]| v.iter().cloned().fold(0.0, f64::max);
    Ok(SobolevReport { max_ratio: max(&ratios), max_local_ratio: max(&local_ratios), ratios, local_ratios, skipped })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HarnackReport {
    pub sup_at_t: f64,
    /// `e^C K U₀`.
    pub bound: f64,
    /// Measured sup of the unit-mass heat kernel at time 1.
    pub k: f64,
    /// `sup_{s ≤ T} ∫u(s)`.
    pub u0: f64,
}

/// Exact discrete semigroup of `∂_t u = Δu + Cu` (5-point symbol).
pub fn heat_evolve(u0: &ScalarField, c: f64, t: f64) -> ScalarField {
    let g = u0.grid;
    let fft = Fft2::new(&g);
    let mut d: Vec<Complex64> = u0.data.iter().map(|v| Complex64::new(*v, 0.0)).collect();
    fft.forward(&mut d);
    let tau = 2.0 * std::f64::consts::PI;
    for (p, v) in d.iter_mut().enumerate() {
        let s = |k: f64, n: usize, h: f64| (2.0 * (0.5 * tau * k / n as f64).sin() / h).powi(2);
        let lam = s(signed_index(p % g.nx, g.nx), g.nx, g.hx) + s(signed_index(p / g.nx, g.ny), g.ny, g.hy);
        *v *= ((c - lam) * t).exp();
    }
    fft.inverse(&mut d);
    ScalarField { data: d.iter().map(|v| v.re).collect(), ..u0.clone() }
}

/// Max-principle demo: evolve `u₀ ≥ 0` under `∂_t u = Δu + Cu` to `T ≥ 1`
/// and compare `sup u(T)` with `e^C K U₀`.
pub fn harnack_demo(u0: &ScalarField, c: f64, t: f64) -> Result<HarnackReport> {
    if !(t >= 1.0) {
        return Err(Error::config("T", "the max-principle demo needs T >= 1"));
    }
    if u0.data.iter().any(|v| *v < 0.0) {
        return Err(Error::config("u0", "initial data must be non-negative"));
    }
    let g = u0.grid;
    let mut delta = ScalarField::zeros(g, 1, false);
    delta.data[0] = 1.0 / g.cell_area();
    let k = heat_evolve(&delta, 0.0, 1.0).data.iter().cloned().fold(0.0, f64::max);
    let ut = heat_evolve(u0, c, t);
    let sup = ut.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let u_max = u0.integral() * (c * t).exp().max(1.0);
    Ok(HarnackReport { sup_at_t: sup, bound: c.exp() * k * u_max, k, u0: u_max })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clifford::{mode_spinor, tangency_project};
    use crate::grid::make_grid;
    use std::f64::consts::PI;

    fn grid(l: f64, n: usize, spin: SpinStructure) -> GridSpec {
        make_grid(l, l, n, n, spin).unwrap()
    }

    #[test]
    fn thresholds() {
        let two_pi = 2.0 * PI;
        assert!((epsilon_threshold(&grid(two_pi, 16, SpinStructure::PERIODIC)) - 1.0).abs() < 1e-14);
        assert!((epsilon_threshold(&grid(two_pi, 16, SpinStructure::new(1, 0).unwrap())) - 2.0).abs() < 1e-14);
        let e = epsilon_threshold(&grid(4.0 * PI, 16, SpinStructure::new(1, 1).unwrap()));
        assert!((e - 2.0 * 2f64.sqrt()).abs() < 1e-13);
        for spin in SpinStructure::all() {
            let m = ModeSet::new(two_pi, two_pi, spin);
            assert_eq!(m.has_zero_mode, spin.is_trivial());
            assert!(m.min_nonzero > 0.0);
        }
    }

    fn mode(g: GridSpec, xi: (f64, f64), lam: f64) -> VectorSpinorField {
        let s = mode_spinor(xi, lam);
        VectorSpinorField::from_fn(g, 1, |x, y, v| {
            let e = Complex64::from_polar(1.0, xi.0 * x + xi.1 * y);
            v[0] = s[0] * e;
            v[1] = s[1] * e;
        })
    }

    #[test]
    fn single_mode_rates() {
        let g = grid(2.0 * PI, 32, SpinStructure::new(1, 0).unwrap());
        let flat = Target::FlatTorus { q: 1 };
        let xi: (f64, f64) = (1.5, 1.0);
        let r: f64 = (xi.0 * xi.0 + xi.1 * xi.1).sqrt();
        let eps = 0.3;
        for (lam, rate) in [(r, -eps * r * r - r), (-r, r - eps * r * r)] {
            let psi = mode(g, xi, lam);
            let out = decoupled_exact(&psi, flat, eps, 0.7).unwrap();
            let expect = psi.map_field(|f| f.scaled((rate * 0.7).exp()));
            assert!(out.field.sub(&expect.field).max_abs() < 1e-12);
        }
        let id = decoupled_exact(&mode(g, xi, r), flat, eps, 0.0).unwrap();
        assert!(id.field.sub(&mode(g, xi, r).field).max_abs() < 1e-13);

        let g0 = grid(2.0 * PI, 16, SpinStructure::PERIODIC);
        let c = VectorSpinorField::from_fn(g0, 1, |_, _, v| {
            v.copy_from_slice(&[Complex64::new(0.2, 1.0), Complex64::new(-1.0, 0.0)])
        });
        let out = decoupled_exact(&c, flat, 2.0, 5.0).unwrap();
        assert!(out.field.sub(&c.field).max_abs() < 1e-13);
        assert!(decoupled_exact(&c, Target::Sphere { q: 3 }, 1.0, 1.0).is_err());
    }

    #[test]
    fn discrete_symbol_matches_stencils() {
        let g = grid(2.0 * PI, 16, SpinStructure::new(1, 1).unwrap());
        let flat = Target::FlatTorus { q: 1 };
        let psi = mode(g, (1.5, -0.5), 0.7).map_field(|f| f.clone());
        let dt = 1e-4;
        let exact = decoupled_exact_with(&psi, flat, 0.5, dt, Symbol::Discrete).unwrap();
        let mut gen = psi.map_field(crate::grid::laplacian).map_field(|f| f.scaled(0.5));
        gen.field.axpy(-1.0, &crate::clifford::dirac_flat(&psi).field);
        let mut euler = psi.clone();
        euler.field.axpy(dt, &gen.field);
        assert!(exact.field.sub(&euler.field).max_abs() < 1e-6);
    }

    fn sphere_map(g: GridSpec, amp: f64) -> MapField {
        MapField::new(g, Target::Sphere { q: 3 }, |x, y, v| {
            let (a, b) = (amp * (x + 0.3).sin(), amp * (y.cos() + 0.5 * (x - y).sin()));
            let n = (a * a + b * b + 1.0).sqrt();
            v.copy_from_slice(&[a / n, b / n, 1.0 / n]);
        })
    }

    fn sphere_spinor(g: GridSpec, u: &MapField) -> VectorSpinorField {
        let (d1, d2) = (0.5 * g.spin.delta1 as f64, 0.5 * g.spin.delta2 as f64);
        tangency_project(
            &VectorSpinorField::from_fn(g, 3, |x, y, v| {
                let ph = Complex64::from_polar(0.6, d1 * x + d2 * y);
                for (c, val) in v.iter_mut().enumerate() {
                    let c = c as f64;
                    *val = ph * Complex64::new((x - 0.5 * c).cos(), (y + c).sin() * 0.4);
                }
            }),
            u,
        )
    }

    #[test]
    fn bochner_orders() {
        let mut phi = vec![];
        let mut psi = vec![];
        for n in [32, 64, 128] {
            let g = grid(2.0 * PI, n, SpinStructure::new(0, 1).unwrap());
            let u = sphere_map(g, 0.7);
            phi.push(bochner_residual_phi(&u));
            psi.push(bochner_residual_psi(&sphere_spinor(g, &u), &u).unwrap());
        }
        for r in [&phi, &psi] {
            for w in r.windows(2) {
                let order = (w[0].gap / w[1].gap).abs().log2();
                assert!((1.6..=2.4).contains(&order), "{r:?}");
            }
        }
    }

    #[test]
    fn bochner_exact_cases() {
        let g = grid(2.0 * PI, 16, SpinStructure::PERIODIC);
        let c = MapField::constant(g, Target::Sphere { q: 3 }, &[0.0, 1.0, 0.0]);
        assert_eq!(bochner_residual_phi(&c), BochnerReport::default());
        let lin = MapField::new(g, Target::FlatTorus { q: 2 }, |x, y, v| v.copy_from_slice(&[x, x - y]));
        let b = bochner_residual_phi(&lin);
        assert!(b.lhs.abs() < 1e-20 && b.rhs.abs() < 1e-20);
        let z = VectorSpinorField::zeros(g, 3);
        assert_eq!(bochner_residual_psi(&z, &c).unwrap(), BochnerReport::default());
    }

    #[test]
    fn harnack_cases() {
        let g = grid(2.0 * PI, 32, SpinStructure::PERIODIC);
        let bump = ScalarField::scalar(g, |x, y| (-((x - 3.0).powi(2) + (y - 3.0).powi(2)) / 0.05).exp());
        let r0 = harnack_demo(&bump, 0.0, 1.0).unwrap();
        assert!(r0.sup_at_t <= r0.bound);
        let r1 = harnack_demo(&bump, 1.0, 2.0).unwrap();
        let r0t = harnack_demo(&bump, 0.0, 2.0).unwrap();
        assert!((r1.sup_at_t / (2f64.exp() * r0t.sup_at_t) - 1.0).abs() < 1e-10);
        assert!(r1.sup_at_t <= r1.bound);
        let c = ScalarField::scalar(g, |_, _| 3.0);
        let rc = harnack_demo(&c, 0.0, 1.5).unwrap();
        assert!((rc.sup_at_t - rc.u0 / g.volume()).abs() < 1e-12);
        assert!(harnack_demo(&c, 0.0, 0.5).is_err());
    }

    #[test]
    fn sobolev_on_simple_fields() {
        let g = grid(2.0 * PI, 32, SpinStructure::PERIODIC);
        let s = ScalarField::scalar(g, |x, _| x.sin());
        let c = ScalarField::scalar(g, |_, _| 2.0);
        let r = sobolev_ratio(&[s, c], 1.0).unwrap();
        assert_eq!(r.skipped, 1);
        assert_eq!(r.ratios.len(), 1);
        // ∫sin⁴ / (∫sin² ∫cos²) = (3/8)(4π²) / (2π²)² within O(h²)
        let exact = 1.5 * PI * PI / (4.0 * PI.powi(4));
        assert!((r.ratios[0] / exact - 1.0).abs() < 0.01);
        assert!(r.local_ratios[0].is_finite() && r.local_ratios[0] > 0.0);
    }
}
