//! Run monitors: energy bookkeeping, local energy concentration, singular
//! events and the singularity budget, plus the stability and blow-up-set
//! quantities.

use serde::{Deserialize, Serialize};

use crate::energy::{du_sq_density, el_residuals, f_density, EnergyReport};
use crate::error::{Error, Result};
use crate::flow::{cfl_dt, kinetic, rhs, step_with, FlowState, StepControl, MONOTONICITY_SLACK};
use crate::fourier::ball_sums;
use crate::grid::{ball_mask, check_radius, GridSpec, ScalarField};

#[derive(Clone, Debug, PartialEq)]
pub struct MonitorConfig {
    pub delta1: f64,
    /// Scan radii, descending.
    pub radii: Vec<f64>,
    /// Steps between records.
    pub cadence: usize,
}

impl MonitorConfig {
    /// `δ₁ = 1`, radii `{i_M/2, i_M/4, i_M/8}`, a record every step.
    pub fn for_grid(grid: &GridSpec) -> Self {
        let i = grid.injectivity_radius();
        Self { delta1: 1.0, radii: vec![i / 2.0, i / 4.0, i / 8.0], cadence: 1 }
    }

    pub fn validate(&self, grid: &GridSpec) -> Result<()> {
        if !(self.delta1 > 0.0 && self.delta1.is_finite()) {
            return Err(Error::config("delta1", "delta1 must be > 0"));
        }
        if self.cadence == 0 {
            return Err(Error::config("cadence", "cadence must be >= 1"));
        }
        if self.radii.is_empty() {
            return Err(Error::config("radii", "at least one radius is required"));
        }
        let inj = grid.injectivity_radius();
        for w in self.radii.windows(2) {
            if !(w[0] > w[1]) {
                return Err(Error::config("radii", "radii must be strictly descending"));
            }
        }
        for r in &self.radii {
            if !(*r > 0.0 && *r < inj) {
                return Err(Error::config("radii", format!("radius {r} outside (0, {inj})")));
            }
        }
        self.scan_radius(grid).map(|_| ())
    }

    /// Smallest configured radius that the grid resolves.
    pub fn scan_radius(&self, grid: &GridSpec) -> Result<f64> {
        self.radii
            .iter()
            .rev()
            .copied()
            .find(|r| check_radius(grid, *r).is_ok())
            .ok_or_else(|| Error::config("radii", "no radius is resolved by the grid"))
    }
}

#[derive(Clone, Debug, PartialEq)]
#[allow(non_snake_case)]
pub struct MonitorRecord {
    pub t: f64,
    pub energy: EnergyReport,
    /// `‖Π∂_t u‖²`.
    pub kinetic_u: f64,
    /// `‖∇̃_t ψ‖²`.
    pub kinetic_psi: f64,
    pub el_residual_u: f64,
    pub el_residual_psi: f64,
    /// One entry per configured radius; NaN for radii the grid does not resolve.
    pub max_local_F: Vec<f64>,
    /// Step that produced this state (0 for the initial record).
    pub dt_used: f64,
    /// Cumulative `∫∫ (|Π∂_t u|² + |∇̃_t ψ|²)` since the start of the run.
    pub dissipated: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trigger {
    Threshold,
    DtFloor,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct SingularityEvent {
    pub t_detected: f64,
    /// Grid indices `[i, j]`.
    pub center: [usize; 2],
    pub radius: f64,
    pub local_F: f64,
    pub trigger: Trigger,
}

/// `max_p F(B_R(p))` for each radius, NaN where unresolved.
pub fn max_local_f(state: &FlowState, radii: &[f64]) -> Vec<f64> {
    let f = f_density(state);
    radii
        .iter()
        .map(|r| match ball_sums(&f, *r) {
            Ok(s) => s.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            Err(_) => f64::NAN,
        })
        .collect()
}

/// Record for `cur`, given the accumulated dissipation up to `cur` and the
/// energy of the previous record.
pub fn monitor_step(
    prev_energy: f64,
    cur: &FlowState,
    dt_used: f64,
    dissipated_since_prev: f64,
    dissipated_total: f64,
    cfg: &MonitorConfig,
) -> Result<MonitorRecord> {
    let energy = cur.energy();
    let slack = MONOTONICITY_SLACK * dissipated_since_prev + 1e-12 * prev_energy.abs().max(1.0);
    if energy.e_eps > prev_energy + slack {
        return Err(Error::StepRejected {
            retries: 0,
            reason: format!("energy rose from {prev_energy} to {} between records", energy.e_eps),
        });
    }
    let (u_t, psi_t) = rhs(cur)?;
    let (kinetic_u, kinetic_psi) = kinetic(&cur.u, &u_t, &psi_t);
    let (el_residual_u, el_residual_psi) = el_residuals(cur)?;
    Ok(MonitorRecord {
        t: cur.t,
        energy,
        kinetic_u,
        kinetic_psi,
        el_residual_u,
        el_residual_psi,
        max_local_F: max_local_f(cur, &cfg.radii),
        dt_used,
        dissipated: dissipated_total,
    })
}

fn event_at(grid: &GridSpec, p: usize, t: f64, radius: f64, local_f: f64, trigger: Trigger) -> SingularityEvent {
    SingularityEvent { t_detected: t, center: [p % grid.nx, p / grid.nx], radius, local_F: local_f, trigger }
}

/// Threshold events of one snapshot: all centers with `F(B_R) ≥ δ₁` at the
/// smallest resolved radius, greedily merged (largest `F` first) within `2R`.
pub fn detect_singularities(state: &FlowState, cfg: &MonitorConfig) -> Result<Vec<SingularityEvent>> {
    let g = *state.u.grid();
    let r = cfg.scan_radius(&g)?;
    let sums = ball_sums(&f_density(state), r)?;
    let mut hot: Vec<usize> = (0..g.len()).filter(|p| sums.data[*p] >= cfg.delta1).collect();
    hot.sort_by(|a, b| sums.data[*b].total_cmp(&sums.data[*a]).then(a.cmp(b)));
    let mut kept: Vec<usize> = vec![];
    for p in hot {
        if kept.iter().all(|c| g.lattice_distance(p, *c) >= 2.0 * r) {
            kept.push(p);
        }
    }
    Ok(kept.into_iter().map(|p| event_at(&g, p, state.t, r, sums.data[p], Trigger::Threshold)).collect())
}

/// Event for a time-step collapse, placed at the energy-density peak.
pub fn dt_floor_event(state: &FlowState, cfg: &MonitorConfig) -> Result<SingularityEvent> {
    let g = *state.u.grid();
    let r = cfg.scan_radius(&g)?;
    let sums = ball_sums(&f_density(state), r)?;
    let p = argmax(&du_sq_density(&state.u));
    Ok(event_at(&g, p, state.t, r, sums.data[p], Trigger::DtFloor))
}

pub(crate) fn argmax(f: &ScalarField) -> usize {
    f.data
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bp, bv), (p, v)| if *v > bv { (p, *v) } else { (bp, bv) })
        .0
}

/// `⌊4 E₀ / δ₁⌋`, the bound on the number of singular points.
pub fn singularity_budget(e0: f64, delta1: f64) -> Result<u64> {
    if !(delta1 > 0.0 && delta1.is_finite()) {
        return Err(Error::config("delta1", "delta1 must be > 0"));
    }
    if !(e0 >= 0.0 && e0.is_finite()) {
        return Err(Error::config("E0", "initial energy must be finite and >= 0"));
    }
    Ok((4.0 * e0 / delta1).floor() as u64)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BudgetInput {
    pub eps: f64,
    /// `F(φ₀, ψ₀)` at this `ε`.
    pub f0: f64,
    pub delta1: f64,
    /// `∫|ψ₀|²`.
    pub psi0_l2_sq: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BudgetRow {
    pub eps: f64,
    pub f0: f64,
    pub delta1: f64,
    pub delta5: f64,
    pub bound: f64,
}

/// `(F(φ₀,ψ₀) + δ₅)/δ₁` with `δ₅ = (4/ε)∫|ψ₀|²`, one row per input.
pub fn epsilon_budget_report(inputs: &[BudgetInput]) -> Result<Vec<BudgetRow>> {
    inputs
        .iter()
        .map(|i| {
            if !(i.eps > 0.0) {
                return Err(Error::config("eps", "eps must be > 0"));
            }
            if !(i.delta1 > 0.0) {
                return Err(Error::config("delta1", "delta1 must be > 0"));
            }
            if !(i.f0 >= 0.0 && i.psi0_l2_sq >= 0.0) {
                return Err(Error::Incompatible("negative energy in budget input".into()));
            }
            let delta5 = 4.0 / i.eps * i.psi0_l2_sq;
            Ok(BudgetRow { eps: i.eps, f0: i.f0, delta1: i.delta1, delta5, bound: (i.f0 + delta5) / i.delta1 })
        })
        .collect()
}

/// `∫_{B_R(center)} (|dφ|² + |ψ|⁴)`.
pub fn dh_blowup_quantity(state: &FlowState, center: (f64, f64), radius: f64) -> Result<f64> {
    let g = *state.u.grid();
    let mask = ball_mask(&g, center, radius)?;
    let mut dens = du_sq_density(&state.u);
    for (p, d) in dens.data.iter_mut().enumerate() {
        let s = state.psi.norm_sqr_at(p);
        *d += s * s;
    }
    Ok(mask.inner(&dens))
}

/// The maximum-principle envelope `max|ψ₀|² e^{t/ε}`.
pub fn spinor_envelope(psi0_sup_sq: f64, t: f64, eps: f64) -> f64 {
    psi0_sup_sq * (t / eps).exp()
}

#[derive(Clone, Debug, PartialEq)]
pub struct StabilityReport {
    pub times: Vec<f64>,
    /// `‖u_A − u_B‖² + ‖ψ_A − ψ_B‖²`.
    pub gaps: Vec<f64>,
    /// `‖ψ_A − ψ_B‖²` alone.
    pub psi_gaps: Vec<f64>,
    /// Smallest `Λ` with `g(t) ≤ g(0) e^{Λt}` along the run (0 when `g(0) = 0`).
    pub lambda: f64,
    /// A step failed before `T`.
    pub truncated: bool,
}

fn gap(a: &FlowState, b: &FlowState) -> (f64, f64) {
    let du = a.u.field.sub(&b.u.field);
    let dpsi = a.psi.field.sub(&b.psi.field);
    let p = dpsi.inner(&dpsi);
    (du.inner(&du) + p, p)
}

/// Co-evolves two states with a shared step sequence up to time `t_end`.
pub fn stability_gap(a: &FlowState, b: &FlowState, t_end: f64, ctl: &StepControl) -> Result<StabilityReport> {
    if a.u.grid() != b.u.grid() || a.u.target != b.u.target || a.eps != b.eps {
        return Err(Error::Incompatible("stability runs need one grid, target and eps".into()));
    }
    let ctl = StepControl { monotone: false, max_retries: 0, ..*ctl };
    let (mut a, mut b) = (a.clone(), b.clone());
    let (g0, p0) = gap(&a, &b);
    let mut rep =
        StabilityReport { times: vec![a.t], gaps: vec![g0], psi_gaps: vec![p0], lambda: 0.0, truncated: false };
    let t0 = a.t;
    while a.t < t_end {
        let next = cfl_dt(&a, &ctl)
            .and_then(|da| cfl_dt(&b, &ctl).map(|db| da.min(db).min(t_end - a.t)))
            .and_then(|dt| Ok((step_with(&a, &ctl, dt)?.0, step_with(&b, &ctl, dt)?.0)));
        match next {
            Ok((na, nb)) => {
                a = na;
                b = nb;
            }
            Err(_) => {
                rep.truncated = true;
                break;
            }
        }
        let (g, p) = gap(&a, &b);
        rep.times.push(a.t);
        rep.gaps.push(g);
        rep.psi_gaps.push(p);
        if g0 > 0.0 && g > 0.0 {
            rep.lambda = rep.lambda.max((g / g0).ln() / (a.t - t0));
        }
    }
    Ok(rep)
}
