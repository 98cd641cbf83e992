//! The regularized Dirac-harmonic map heat flow in extrinsic form.
//!
//! The map `u` and the spinor `ψ` are evolved as ambient fields in `R^q` and
//! `C² ⊗ R^q`; after every stage `u` is projected back onto N and `ψ` onto
//! the tangent space along `u`.

use crate::clifford::{
    contract, dirac_flat, gamma_pair, project_in_place, spinor_dot, twisted_conn_laplacian_unchecked,
    twisted_dirac_unchecked, VectorSpinorField,
};
use crate::diagnostics::{
    detect_singularities, dt_floor_event, monitor_step, MonitorConfig, MonitorRecord, SingularityEvent, Trigger,
};
use crate::energy::{curvature_R, curvature_Rc, du_sq_density, energy_unchecked, tension, EnergyReport};
use crate::error::{Error, Result};
use crate::grid::{laplacian, partial, Axis, Field};
use crate::target::{dot, dot_rc, MapField};
use num_complex::Complex64;

/// Constraint tolerance of a [`FlowState`].
pub const STATE_TOL: f64 = 1e-8;

/// Allowed energy increase per step, as a fraction of `dt` times the dissipation.
pub const MONOTONICITY_SLACK: f64 = 0.02;

#[derive(Clone, Debug, PartialEq)]
pub struct FlowState {
    pub t: f64,
    pub eps: f64,
    pub u: MapField,
    pub psi: VectorSpinorField,
}

impl FlowState {
    pub fn new(t: f64, eps: f64, u: MapField, psi: VectorSpinorField) -> Result<Self> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::config("eps", "eps must be > 0"));
        }
        if u.grid() != psi.grid() || u.q() != psi.q {
            return Err(Error::Incompatible("map and spinor differ in grid or q".into()));
        }
        let s = Self { t, eps, u, psi };
        s.check_constraints()?;
        Ok(s)
    }

    pub fn check_constraints(&self) -> Result<()> {
        self.u.check_on_target(STATE_TOL)?;
        let residual = self.psi.tangency_residual(&self.u);
        if !(residual <= STATE_TOL * self.psi.sup_sq().sqrt().max(1.0)) {
            return Err(Error::NotTangent { residual });
        }
        Ok(())
    }

    pub fn energy(&self) -> EnergyReport {
        energy_unchecked(&self.u, &self.psi, self.eps)
    }

    /// Largest `|du|²` over the grid (discrete point density).
    pub fn max_du_sq(&self) -> f64 {
        du_sq_density(&self.u).data.iter().cloned().fold(0.0, f64::max)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepControl {
    /// Last step used; informational.
    pub dt: f64,
    pub cfl_safety: f64,
    pub max_dt: f64,
    pub min_dt: f64,
    /// Bypasses the CFL rule (oracle comparisons at a prescribed step).
    pub fixed_dt: Option<f64>,
    pub max_retries: usize,
    /// Reject steps that raise `E_ε` beyond the monotonicity slack.
    pub monotone: bool,
}

impl Default for StepControl {
    fn default() -> Self {
        Self { dt: 0.0, cfl_safety: 0.5, max_dt: 1e-2, min_dt: 1e-10, fixed_dt: None, max_retries: 8, monotone: true }
    }
}

impl StepControl {
    pub fn fixed(dt: f64) -> Self {
        Self { dt, fixed_dt: Some(dt), min_dt: 0.0, max_dt: f64::INFINITY, ..Self::default() }
    }
}

/// Explicit step size `safety · min(h²/4, h²/(4ε)) / (1 + max|du|² + max|ψ|²)`,
/// clamped above by `max_dt`.
pub fn cfl_dt(state: &FlowState, ctl: &StepControl) -> Result<f64> {
    if let Some(dt) = ctl.fixed_dt {
        return Ok(dt);
    }
    let h = state.u.grid().min_spacing();
    let h2 = h * h;
    let base = (h2 / 4.0).min(h2 / (4.0 * state.eps));
    let dt = (ctl.cfl_safety * base / (1.0 + state.max_du_sq() + state.psi.sup_sq())).min(ctl.max_dt);
    if !(dt >= ctl.min_dt) {
        return Err(Error::TimeStepFloor { dt, min_dt: ctl.min_dt });
    }
    Ok(dt)
}

/// Which `∂_t u` enters the `II(∂_t u, ψ)` term of the spinor equation.
#[derive(Clone, Copy, Debug)]
pub enum Coupling<'a> {
    /// The map velocity computed in the same evaluation.
    GaussSeidel,
    /// A velocity supplied by the caller, typically from the previous step.
    Lagged(&'a Field<f64>),
}

fn finite<T: crate::grid::FieldValue>(f: &Field<T>, term: &'static str) -> Result<()> {
    if f.data.iter().all(|v| v.real_dot(*v).is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { term })
    }
}

/// Extrinsic tension `Δu + |du|² u` with the discrete energy density; for the
/// sphere this is `Π_u Δu` up to rounding, for the flat target plain `Δu`.
pub fn harmonic_map_rhs(u: &MapField) -> Field<f64> {
    let mut out = u.laplacian();
    if !u.target.is_flat() {
        let dens = du_sq_density(u);
        let q = u.q();
        for p in 0..u.grid().len() {
            let up = u.at(p);
            for k in 0..q {
                out.data[p * q + k] += dens.data[p] * up[k];
            }
        }
    }
    out
}

/// Velocities `(∂_t u, ∂_t ψ)` of the flow, ambient form, Gauss-Seidel coupling.
pub fn rhs(state: &FlowState) -> Result<(Field<f64>, VectorSpinorField)> {
    rhs_with(state, Coupling::GaussSeidel)
}

/// Ambient velocities of the flow.
///
/// Map: `Δu - II(du,du) - P(II(du_α, γ_α·ψ), ψ) - εB(du,ψ,du,ψ)
/// - εP(II(du_α, ψ), ∂_α ψ) + εP(II(du_α, ∂_α ψ), ψ)`.
///
/// Spinor: `εΔψ - ∂̸ψ + II(du_α, γ_α·ψ) + II(∂_t u, ψ) - 2εII(du_α, ∇̃_α ψ)
/// - ε(∇_α II)(du_α, ψ) - εII(τ(u), ψ)`, all derivatives ambient.
pub fn rhs_with(state: &FlowState, coupling: Coupling) -> Result<(Field<f64>, VectorSpinorField)> {
    state.check_constraints()?;
    let (u, psi, eps) = (&state.u, &state.psi, state.eps);
    let g = *u.grid();
    let q = u.q();

    let tau = harmonic_map_rhs(u);
    finite(&tau, "tension")?;
    if psi.is_zero() {
        return Ok((tau, psi.clone()));
    }

    let mut psi_t = psi.map_field(laplacian).map_field(|f| f.scaled(eps));
    finite(&psi_t.field, "spinor laplacian")?;
    let dirac = dirac_flat(psi);
    finite(&dirac.field, "dirac")?;
    psi_t.field.axpy(-1.0, &dirac.field);
    if u.target.is_flat() {
        return Ok((tau, psi_t));
    }

    let du = [u.differential(Axis::X), u.differential(Axis::Y)];
    let dpsi = [partial(&psi.field, Axis::X), partial(&psi.field, Axis::Y)];

    let mut u_t = tau.clone();
    for p in 0..g.len() {
        let (up, v) = (u.at(p), psi.at(p));
        let o = &mut u_t.data[p * q..(p + 1) * q];
        for (alpha, axis) in Axis::BOTH.into_iter().enumerate() {
            let d = du[alpha].at(p);
            let dv = dpsi[alpha].at(p);
            let a = contract(d, v);
            let b = contract(d, dv);
            // B = Σ|du_α·ψ|² u
            let bb = a[0].norm_sqr() + a[1].norm_sqr();
            for k in 0..q {
                let (x, y) = gamma_pair(axis, v[k], v[q + k]);
                o[k] += spinor_dot([x, y], a) - eps * bb * up[k] + eps * spinor_dot(b, [v[k], v[q + k]])
                    - eps * spinor_dot(a, [dv[k], dv[q + k]]);
            }
        }
    }
    finite(&u_t, "map coupling")?;

    let ut_used = match coupling {
        Coupling::GaussSeidel => &u_t,
        Coupling::Lagged(f) => f,
    };
    let mut pd = [Complex64::new(0.0, 0.0); 2];
    for p in 0..g.len() {
        let (up, v) = (u.at(p), psi.at(p));
        let mut vt = ut_used.at(p).to_vec();
        u.target.project_tangent(up, &mut vt);
        let tau_p = tau.at(p);
        // normal coefficient (a spinor pair multiplying u)
        let mut n = contract(tau_p, v);
        n[0] *= eps;
        n[1] *= eps;
        let w = contract(&vt, v);
        n[0] -= w[0];
        n[1] -= w[1];
        let mut tang = Vec::with_capacity(2);
        for (alpha, axis) in Axis::BOTH.into_iter().enumerate() {
            let d = du[alpha].at(p);
            let dv = dpsi[alpha].at(p);
            let a = contract(d, v);
            let (ga, gb) = gamma_pair(axis, a[0], a[1]);
            n[0] -= ga;
            n[1] -= gb;
            // c_α = du_α · Π ∂_α ψ
            let du_u = dot(d, up);
            for s in 0..2 {
                let un = dot_rc(up, &dv[s * q..(s + 1) * q]);
                pd[s] = dot_rc(d, &dv[s * q..(s + 1) * q]) - un * du_u;
            }
            n[0] += pd[0] * (2.0 * eps);
            n[1] += pd[1] * (2.0 * eps);
            tang.push(a);
        }
        let o = psi_t.at_mut(p);
        for k in 0..q {
            let mut s0 = n[0] * up[k];
            let mut s1 = n[1] * up[k];
            for (alpha, a) in tang.iter().enumerate() {
                let dk = du[alpha].at(p)[k] * eps;
                s0 += a[0] * dk;
                s1 += a[1] * dk;
            }
            o[k] += s0;
            o[q + k] += s1;
        }
    }
    finite(&psi_t.field, "spinor coupling")?;
    Ok((u_t, psi_t))
}

/// Intrinsic velocities: `τ - R - εR_c` and `Π(εΔ̃ψ - D̸ψ) - <∂_t u, ψ> u`
/// (the last term is the normal part of the ambient derivative of ψ).
pub fn rhs_intrinsic(state: &FlowState) -> Result<(Field<f64>, VectorSpinorField)> {
    state.check_constraints()?;
    let (u, psi, eps) = (&state.u, &state.psi, state.eps);
    let mut u_t = tension(u);
    if psi.is_zero() {
        return Ok((u_t, psi.clone()));
    }
    u_t.axpy(-1.0, &curvature_R(u, psi));
    u_t.axpy(-eps, &curvature_Rc(u, psi));
    let mut psi_t = twisted_conn_laplacian_unchecked(psi, u).map_field(|f| f.scaled(eps));
    psi_t.field.axpy(-1.0, &twisted_dirac_unchecked(psi, u).field);
    if !u.target.is_flat() {
        let q = u.q();
        for p in 0..u.grid().len() {
            let w = contract(u_t.at(p), psi.at(p));
            let up = u.at(p).to_vec();
            let o = psi_t.at_mut(p);
            for k in 0..q {
                o[k] -= w[0] * up[k];
                o[q + k] -= w[1] * up[k];
            }
        }
    }
    Ok((u_t, psi_t))
}

/// Tangential parts `(Π ∂_t u, ∇̃_t ψ)` of ambient velocities at `u`.
pub fn tangential(u: &MapField, u_t: &Field<f64>, psi_t: &VectorSpinorField) -> (Field<f64>, VectorSpinorField) {
    let mut a = u_t.clone();
    if !u.target.is_flat() {
        for p in 0..u.grid().len() {
            u.target.project_tangent(u.at(p), a.at_mut(p));
        }
    }
    let mut b = psi_t.clone();
    project_in_place(&mut b, u);
    (a, b)
}

/// `(‖Π ∂_t u‖², ‖∇̃_t ψ‖²)`.
pub fn kinetic(u: &MapField, u_t: &Field<f64>, psi_t: &VectorSpinorField) -> (f64, f64) {
    let (a, b) = tangential(u, u_t, psi_t);
    (a.inner(&a), b.field.inner(&b.field))
}

fn advance(base: &FlowState, dt: f64, u_t: &Field<f64>, psi_t: &VectorSpinorField) -> Result<FlowState> {
    let mut uf = base.u.field.clone();
    uf.axpy(dt, u_t);
    let u = MapField { field: uf, target: base.u.target }.projected()?;
    let mut psi = base.psi.clone();
    if !psi.is_zero() {
        psi.field.axpy(dt, &psi_t.field);
        project_in_place(&mut psi, &u);
    }
    finite(&u.field, "map update")?;
    finite(&psi.field, "spinor update")?;
    Ok(FlowState { t: base.t + dt, eps: base.eps, u, psi })
}

/// Projected explicit midpoint step from precomputed first-stage velocities.
fn midpoint(state: &FlowState, dt: f64, k1: &(Field<f64>, VectorSpinorField)) -> Result<(FlowState, (f64, f64))> {
    let mid = advance(state, 0.5 * dt, &k1.0, &k1.1)?;
    let k2 = rhs(&mid)?;
    let kin = kinetic(&mid.u, &k2.0, &k2.1);
    let mut next = advance(state, dt, &k2.0, &k2.1)?;
    next.t = state.t + dt;
    Ok((next, kin))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepInfo {
    pub dt: f64,
    pub retries: usize,
    /// `dt · (‖Π∂_t u‖² + ‖∇̃_t ψ‖²)` at the midpoint.
    pub dissipation: f64,
    /// NaN when the monotonicity check is off.
    pub energy_before: f64,
    pub energy_after: f64,
}

/// One accepted step with automatic step size.
pub fn step(state: &FlowState, ctl: &StepControl) -> Result<FlowState> {
    let dt = cfl_dt(state, ctl)?;
    step_with(state, ctl, dt).map(|(s, _)| s)
}

/// One accepted step starting from `dt`; rejected attempts halve `dt`.
pub fn step_with(state: &FlowState, ctl: &StepControl, dt: f64) -> Result<(FlowState, StepInfo)> {
    let k1 = rhs(state)?;
    let energy = |s: &FlowState| if ctl.monotone { s.energy().e_eps } else { f64::NAN };
    let e0 = energy(state);
    let mut dt = dt;
    let mut reason = String::new();
    for retries in 0..=ctl.max_retries {
        if dt < ctl.min_dt {
            return Err(Error::TimeStepFloor { dt, min_dt: ctl.min_dt });
        }
        match midpoint(state, dt, &k1) {
            Ok((next, (ku, kp))) => {
                let e1 = energy(&next);
                let dissipation = dt * (ku + kp);
                let slack = MONOTONICITY_SLACK * dissipation + 1e-13 * e0.abs().max(1e-300);
                if !ctl.monotone || e1 <= e0 + slack {
                    let info = StepInfo { dt, retries, dissipation, energy_before: e0, energy_after: e1 };
                    return Ok((next, info));
                }
                reason = format!("energy rose from {e0} to {e1}");
            }
            Err(e @ (Error::DegenerateProjection { .. } | Error::NonFinite { .. })) => {
                reason = e.to_string();
            }
            Err(e) => return Err(e),
        }
        dt *= 0.5;
    }
    Err(Error::StepRejected { retries: ctl.max_retries, reason })
}

/// One projected midpoint step of the harmonic map heat flow, with no spinor
/// anywhere; the reference for the `ψ ≡ 0` reduction.
pub fn harmonic_map_step(u: &MapField, dt: f64) -> Result<MapField> {
    let k1 = harmonic_map_rhs(u);
    let mut mid = u.field.clone();
    mid.axpy(0.5 * dt, &k1);
    let mid = MapField { field: mid, target: u.target }.projected()?;
    let k2 = harmonic_map_rhs(&mid);
    let mut next = u.field.clone();
    next.axpy(dt, &k2);
    MapField { field: next, target: u.target }.projected()
}

/// How a [`run`] ended.
#[derive(Clone, Debug, PartialEq)]
pub enum Termination {
    Completed,
    Singular(Trigger),
    Failed(String),
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    /// Last accepted state (the last pre-singular state for singular runs).
    pub state: FlowState,
    pub records: Vec<MonitorRecord>,
    pub events: Vec<SingularityEvent>,
    pub termination: Termination,
    pub steps: usize,
}

/// Evolves `state` to `t_end`, recording every `monitors.cadence` steps and
/// stopping at the first singular signal. Errors become terminal outcomes.
pub fn run(state: &FlowState, t_end: f64, ctl: &StepControl, monitors: &MonitorConfig) -> RunOutcome {
    let mut out = RunOutcome {
        state: state.clone(),
        records: vec![],
        events: vec![],
        termination: Termination::Completed,
        steps: 0,
    };
    if let Err(e) = run_loop(&mut out, t_end, ctl, monitors) {
        out.termination = Termination::Failed(e.to_string());
    }
    out
}

fn run_loop(out: &mut RunOutcome, t_end: f64, ctl: &StepControl, monitors: &MonitorConfig) -> Result<()> {
    out.state.check_constraints()?;
    monitors.validate(out.state.u.grid())?;
    let first = monitor_step(out.state.energy().e_eps, &out.state, 0.0, 0.0, 0.0, monitors)?;
    let mut last_energy = first.energy.e_eps;
    out.records.push(first);
    out.events = detect_singularities(&out.state, monitors)?;
    if !out.events.is_empty() {
        out.termination = Termination::Singular(Trigger::Threshold);
        return Ok(());
    }
    let (mut total, mut since) = (0.0, 0.0);
    let tiny = 1e-12 * t_end.abs().max(1.0);
    while t_end - out.state.t > tiny {
        let remaining = t_end - out.state.t;
        let attempt = cfl_dt(&out.state, ctl).and_then(|dt| {
            let mut c = *ctl;
            if remaining < c.min_dt {
                c.min_dt = 0.0;
            }
            step_with(&out.state, &c, dt.min(remaining))
        });
        let (next, info) = match attempt {
            Ok(v) => v,
            Err(Error::TimeStepFloor { .. }) => {
                out.events = vec![dt_floor_event(&out.state, monitors)?];
                out.termination = Termination::Singular(Trigger::DtFloor);
                return Ok(());
            }
            Err(e) => return Err(e),
        };
        out.state = next;
        out.steps += 1;
        total += info.dissipation;
        since += info.dissipation;
        let done = t_end - out.state.t <= tiny;
        if out.steps.is_multiple_of(monitors.cadence) || done {
            let rec = monitor_step(last_energy, &out.state, info.dt, since, total, monitors)?;
            last_energy = rec.energy.e_eps;
            since = 0.0;
            out.records.push(rec);
            out.events = detect_singularities(&out.state, monitors)?;
            if !out.events.is_empty() {
                out.termination = Termination::Singular(Trigger::Threshold);
                return Ok(());
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clifford::tangency_project;
    use crate::grid::{make_grid, GridSpec, SpinStructure};
    use crate::target::Target;
    use std::f64::consts::PI;

    fn grid(n: usize, spin: SpinStructure) -> GridSpec {
        make_grid(2.0 * PI, 2.0 * PI, n, n, spin).unwrap()
    }

    fn bumpy(g: GridSpec, amp: f64) -> MapField {
        MapField::new(g, Target::Sphere { q: 3 }, |x, y, v| {
            let (a, b) = (amp * (x + 0.3).sin(), amp * (y.cos() + 0.5 * (x - y).sin()));
            let n = (a * a + b * b + 1.0).sqrt();
            v.copy_from_slice(&[a / n, b / n, 1.0 / n]);
        })
    }

    fn spinor(g: GridSpec, u: &MapField, amp: f64) -> VectorSpinorField {
        let (d1, d2) = (0.5 * g.spin.delta1 as f64, 0.5 * g.spin.delta2 as f64);
        let raw = VectorSpinorField::from_fn(g, u.q(), |x, y, v| {
            let ph = Complex64::from_polar(amp, d1 * x + d2 * y);
            for (c, val) in v.iter_mut().enumerate() {
                let c = c as f64;
                *val = ph * Complex64::new((x + 0.7 * c).cos(), 0.5 * (y - c).sin());
            }
        });
        tangency_project(&raw, u)
    }

    fn state(n: usize, eps: f64, amp_u: f64, amp_psi: f64) -> FlowState {
        let g = grid(n, SpinStructure::new(1, 1).unwrap());
        let u = bumpy(g, amp_u);
        let psi = spinor(g, &u, amp_psi);
        FlowState::new(0.0, eps, u, psi).unwrap()
    }

    #[test]
    fn rejects_bad_states() {
        let g = grid(8, SpinStructure::PERIODIC);
        let u = bumpy(g, 0.3);
        assert!(FlowState::new(0.0, 0.0, u.clone(), VectorSpinorField::zeros(g, 3)).is_err());
        let mut off = u.clone();
        off.field.data[0] = 2.0;
        assert!(matches!(FlowState::new(0.0, 1.0, off, VectorSpinorField::zeros(g, 3)), Err(Error::OffTarget { .. })));
        let raw = VectorSpinorField::from_fn(g, 3, |_, _, v| v.fill(Complex64::new(1.0, 0.0)));
        assert!(matches!(FlowState::new(0.0, 1.0, u, raw), Err(Error::NotTangent { .. })));
    }

    #[test]
    fn stationary_and_flat_cases() {
        let g = grid(16, SpinStructure::PERIODIC);
        let c = FlowState::new(
            0.0,
            1.0,
            MapField::constant(g, Target::Sphere { q: 3 }, &[0.0, 0.0, 1.0]),
            VectorSpinorField::zeros(g, 3),
        )
        .unwrap();
        let (a, b) = rhs(&c).unwrap();
        assert_eq!(a.max_abs(), 0.0);
        assert!(b.is_zero());
        let next = step(&c, &StepControl::default()).unwrap();
        assert_eq!(next.u, c.u);
        assert!(next.t > 0.0);

        let g = grid(16, SpinStructure::new(1, 0).unwrap());
        let u = MapField::new(g, Target::FlatTorus { q: 2 }, |x, y, v| v.copy_from_slice(&[(x + y).sin(), x]));
        let psi = spinor(g, &u, 1.0);
        let s = FlowState::new(0.0, 0.7, u.clone(), psi.clone()).unwrap();
        let (a, b) = rhs(&s).unwrap();
        assert_eq!(a, u.laplacian());
        let mut expect = psi.map_field(laplacian).map_field(|f| f.scaled(0.7));
        expect.field.axpy(-1.0, &dirac_flat(&psi).field);
        assert_eq!(b, expect);
    }

    #[test]
    fn velocities_are_tangent_to_second_order() {
        let mut gaps = vec![];
        for n in [32, 64] {
            let s = state(n, 2.0, 0.6, 0.5);
            let (a, b) = rhs(&s).unwrap();
            let (ta, tb) = tangential(&s.u, &a, &b);
            assert!(a.sub(&ta).norm_l2() < 0.05 * a.norm_l2());
            // the normal part of the spinor velocity is -<∂_t u, ψ> u up to O(h²)
            let (_, bi) = rhs_intrinsic(&s).unwrap();
            let (_, tbi) = tangential(&s.u, &a, &bi);
            let n_ext = b.field.sub(&tb.field);
            let n_int = bi.field.sub(&tbi.field);
            gaps.push(n_ext.sub(&n_int).norm_l2() / n_int.norm_l2());
        }
        assert!(gaps[0] < 0.1 && gaps[0] / gaps[1] > 3.2, "{gaps:?}");
    }

    #[test]
    fn extrinsic_matches_intrinsic_under_refinement() {
        let mut gaps = vec![];
        for n in [32, 64] {
            let s = state(n, 1.5, 0.6, 0.5);
            let (ae, be) = rhs(&s).unwrap();
            let (ai, bi) = rhs_intrinsic(&s).unwrap();
            gaps.push((ae.sub(&ai).norm_l2(), be.field.sub(&bi.field).norm_l2()));
        }
        for (g0, g1) in [(gaps[0].0, gaps[1].0), (gaps[0].1, gaps[1].1)] {
            let order = (g0 / g1).log2();
            assert!((1.6..=2.4).contains(&order), "{gaps:?}");
        }
    }

    #[test]
    fn lagged_coupling_agrees_to_first_order() {
        let s0 = state(32, 2.0, 0.6, 0.5);
        let ctl = StepControl::default();
        let dt = cfl_dt(&s0, &ctl).unwrap();
        let mut diffs = vec![];
        for h in [dt, 0.5 * dt] {
            let (u_t0, _) = rhs(&s0).unwrap();
            let (s1, _) = step_with(&s0, &StepControl::fixed(h), h).unwrap();
            let (_, gs) = rhs(&s1).unwrap();
            let (_, lag) = rhs_with(&s1, Coupling::Lagged(&u_t0)).unwrap();
            diffs.push(gs.field.sub(&lag.field).norm_l2());
        }
        let r = diffs[0] / diffs[1];
        assert!((1.6..=2.4).contains(&r), "{diffs:?}");
    }

    #[test]
    fn cfl_formula() {
        let g = grid(64, SpinStructure::PERIODIC);
        let c = FlowState::new(
            0.0,
            4.0,
            MapField::constant(g, Target::Sphere { q: 3 }, &[1.0, 0.0, 0.0]),
            VectorSpinorField::zeros(g, 3),
        )
        .unwrap();
        let ctl = StepControl { max_dt: 1.0, ..StepControl::default() };
        let h = g.hx;
        let dt = cfl_dt(&c, &ctl).unwrap();
        assert!((dt / (0.5 * h * h / 16.0) - 1.0).abs() < 1e-12);
        let floor = StepControl { min_dt: 1.0, ..ctl };
        assert!(matches!(cfl_dt(&c, &floor), Err(Error::TimeStepFloor { .. })));
    }

    #[test]
    fn zero_spinor_is_preserved_and_matches_harmonic_flow() {
        let g = grid(32, SpinStructure::new(1, 0).unwrap());
        let u = bumpy(g, 0.8);
        let mut s = FlowState::new(0.0, 1.0, u.clone(), VectorSpinorField::zeros(g, 3)).unwrap();
        let mut hu = u;
        let ctl = StepControl::default();
        for _ in 0..20 {
            let dt = cfl_dt(&s, &ctl).unwrap();
            let (next, info) = step_with(&s, &ctl, dt).unwrap();
            assert_eq!(info.retries, 0);
            s = next;
            hu = harmonic_map_step(&hu, dt).unwrap();
            assert!(s.psi.is_zero());
            assert_eq!(s.u, hu);
        }
    }

    #[test]
    fn energy_decreases_along_steps() {
        let mut s = state(32, 2.0, 0.6, 0.4);
        let ctl = StepControl::default();
        let mut e = s.energy().e_eps;
        for _ in 0..30 {
            let dt = cfl_dt(&s, &ctl).unwrap();
            let (next, info) = step_with(&s, &ctl, dt).unwrap();
            assert!(info.energy_after <= e);
            assert!(next.u.constraint_residual() < 1e-12);
            assert!(next.psi.tangency_residual(&next.u) < 1e-12);
            e = info.energy_after;
            s = next;
        }
    }

    #[test]
    fn zero_state_run_is_trivial() {
        let g = grid(16, SpinStructure::PERIODIC);
        let u = MapField::constant(g, Target::Sphere { q: 3 }, &[0.0, 0.0, 1.0]);
        let s = FlowState::new(0.0, 1.0, u, VectorSpinorField::zeros(g, 3)).unwrap();
        let out = run(&s, 1.0, &StepControl::default(), &MonitorConfig::for_grid(&g));
        assert_eq!(out.termination, Termination::Completed);
        assert!(out.events.is_empty());
        assert!((out.state.t - 1.0).abs() < 1e-12);
        assert_eq!(out.state.u, s.u);
        assert!(out.state.psi.is_zero());
        assert!(out.records.windows(2).all(|w| w[1].t > w[0].t));
    }

    #[test]
    fn smooth_run_records_decreasing_energy() {
        let g = grid(16, SpinStructure::new(1, 1).unwrap());
        let u = bumpy(g, 0.4);
        let psi = crate::init::random_spinor(&u, 1, 0.3, 2);
        let s = FlowState::new(0.0, 4.0, u, psi).unwrap();
        let mon = MonitorConfig { cadence: 5, ..MonitorConfig::for_grid(&g) };
        let out = run(&s, 0.2, &StepControl::default(), &mon);
        assert_eq!(out.termination, Termination::Completed);
        assert!(out.records.len() >= 3);
        assert!(out.records.windows(2).all(|w| w[1].energy.e_eps <= w[0].energy.e_eps));
        assert!(out.records.windows(2).all(|w| w[1].dissipated >= w[0].dissipated));
    }
}
