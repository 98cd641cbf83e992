//! Preset experiments and run-directory output.
//!
//! A run directory holds `config.toml` (the resolved configuration),
//! `run.csv`, `events.json`, `summary.json`, `final.ckpt` and
//! `conventions.txt`. Sweeps write one such directory per member plus a
//! summary table; the identities preset writes `identities.csv`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::Serialize;

use crate::checkpoint::write_checkpoint;
use crate::clifford::{tangency_project, VectorSpinorField};
use crate::config::{EpsChoice, MapInit, Preset, RunConfig, SpinorInit};
use crate::diagnostics::{epsilon_budget_report, singularity_budget, BudgetInput, MonitorRecord, Trigger};
use crate::error::Result;
use crate::flow::{rhs, rhs_intrinsic, run, FlowState, RunOutcome, Termination};
use crate::grid::{Field, GridSpec};
use crate::init::{
    constant_spinor, degree1_bubble, geodesic_map, random_scalar, random_spinor, smooth_map, spinor_mode,
};
use crate::spectral::{
    bochner_residual_phi, bochner_residual_psi, epsilon_threshold, gradient_check, harnack_demo, sobolev_ratio, ModeSet,
};
use crate::target::{MapField, Target};

pub const EXIT_CLEAN: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_SINGULAR: i32 = 2;

/// Sign and Clifford conventions written next to every run.
pub fn conventions_stamp() -> String {
    format!(
        "dhflow {}\n\
         clifford: gamma_1 = i sigma_1, gamma_2 = i sigma_2, gamma_a gamma_b + gamma_b gamma_a = -2 delta_ab\n\
         dirac: D = sum_a gamma_a d_a (centered differences), Fourier symbol -sigma.xi\n\
         spin structure (d1, d2): psi(x + L_a e_a) = (-1)^d_a psi(x), frequencies 2 pi (k + d/2) / L\n\
         energy: E = 1/2 int |du|^2 + 1/2 int Re<psi, D psi> + eps/2 int |grad psi|^2, edge-form stencils\n\
         local F: 1/2 int_B (|du|^2 + eps |grad psi|^2)\n\
         curvature: R(X,Y)Z = <Y,Z>X - <X,Z>Y on the unit sphere\n\
         csv: psi_l2 = int |psi|^2, psi_l4 = int |psi|^4, psi_sup = max |psi|^2, kinetic_* are squared L2 norms\n",
        env!("CARGO_PKG_VERSION")
    )
}

/// Initial state described by `cfg` on `grid` at `eps`.
pub fn initial_state(cfg: &RunConfig, grid: GridSpec, eps: f64) -> Result<FlowState> {
    let target = cfg.target;
    let q = target.q();
    let u = match cfg.map {
        MapInit::Constant => {
            let mut p = vec![0.0; q];
            if !target.is_flat() {
                p[q - 1] = 1.0;
            }
            MapField::constant(grid, target, &p)
        }
        MapInit::Geodesic => geodesic_map(grid),
        MapInit::Smooth { amp } => smooth_map(grid, amp),
        MapInit::Bubble { lambda, rho, center } => degree1_bubble(grid, center, lambda, rho),
    };
    let mut dir = vec![0.0; q];
    dir[0] = 1.0;
    let psi = match cfg.spinor {
        SpinorInit::Zero => VectorSpinorField::zeros(grid, q),
        SpinorInit::Constant { amp } => {
            let c = Complex64::new(amp / 2f64.sqrt(), 0.0);
            tangency_project(&constant_spinor(grid, [c, c], &dir), &u)
        }
        SpinorInit::Random { amp, kmax } => random_spinor(&u, kmax, amp, cfg.seed),
        SpinorInit::MinMode { amp, branch } => {
            let xi = ModeSet::for_grid(&grid).xi_min();
            let lam = branch * (xi.0 * xi.0 + xi.1 * xi.1).sqrt();
            tangency_project(&spinor_mode(grid, xi, lam, amp, &dir), &u)
        }
    };
    FlowState::new(0.0, eps, u, psi)
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn csv_header(n_radii: usize) -> String {
    let mut h = String::from(
        "t,E_eps,dirichlet,dirac_pairing,spinor_gradient,psi_l2,psi_l4,psi_sup,kinetic_u,kinetic_psi,el_residual_u,el_residual_psi",
    );
    for k in 1..=n_radii {
        write!(h, ",max_local_F_R{k}").unwrap();
    }
    h.push_str(",dt");
    h
}

pub fn csv_row(r: &MonitorRecord) -> String {
    let e = &r.energy;
    let mut cols = vec![
        r.t,
        e.e_eps,
        e.dirichlet,
        e.dirac_pairing,
        e.spinor_gradient,
        e.psi_l2,
        e.psi_l4,
        e.psi_sup,
        r.kinetic_u,
        r.kinetic_psi,
        r.el_residual_u,
        r.el_residual_psi,
    ];
    cols.extend(&r.max_local_F);
    cols.push(r.dt_used);
    cols.into_iter().map(num).collect::<Vec<_>>().join(",")
}

pub fn run_csv(records: &[MonitorRecord], n_radii: usize) -> String {
    let mut s = csv_header(n_radii);
    s.push('\n');
    for r in records {
        s.push_str(&csv_row(r));
        s.push('\n');
    }
    s
}

#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    pub termination: String,
    pub trigger: Option<Trigger>,
    pub message: Option<String>,
    pub steps: usize,
    pub t_final: f64,
    pub eps: f64,
    pub initial_energy: f64,
    pub event_count: usize,
    /// `⌊4E₀/δ₁⌋`, absent when `E₀ < 0`.
    pub singularity_budget: Option<u64>,
}

impl RunSummary {
    pub fn exit_code(&self) -> i32 {
        match self.termination.as_str() {
            "completed" => EXIT_CLEAN,
            "singular" => EXIT_SINGULAR,
            _ => EXIT_FAILURE,
        }
    }
}

fn summarize(initial: &FlowState, out: &RunOutcome, delta1: f64) -> RunSummary {
    let e0 = initial.energy().e_eps;
    let (termination, trigger, message) = match &out.termination {
        Termination::Completed => ("completed", None, None),
        Termination::Singular(t) => ("singular", Some(*t), None),
        Termination::Failed(m) => ("failed", None, Some(m.clone())),
    };
    RunSummary {
        termination: termination.into(),
        trigger,
        message,
        steps: out.steps,
        t_final: out.state.t,
        eps: initial.eps,
        initial_energy: e0,
        event_count: out.events.len(),
        singularity_budget: singularity_budget(e0, delta1).ok(),
    }
}

fn json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

/// Writes the standard run directory.
pub fn write_run_dir(dir: &Path, cfg: &RunConfig, initial: &FlowState, out: &RunOutcome) -> Result<RunSummary> {
    fs::create_dir_all(dir)?;
    let summary = summarize(initial, out, cfg.monitor.delta1);
    fs::write(dir.join("config.toml"), cfg.to_toml())?;
    fs::write(dir.join("run.csv"), run_csv(&out.records, cfg.monitor.radii.len()))?;
    fs::write(dir.join("events.json"), json(&out.events))?;
    fs::write(dir.join("summary.json"), json(&summary))?;
    fs::write(dir.join("conventions.txt"), conventions_stamp())?;
    write_checkpoint(&out.state, &dir.join("final.ckpt"))?;
    Ok(summary)
}

/// One flow run of `cfg` at `(grid, eps)` written to `dir`.
pub fn single_run(
    cfg: &RunConfig,
    grid: GridSpec,
    eps: f64,
    dir: &Path,
) -> Result<(FlowState, RunOutcome, RunSummary)> {
    let initial = initial_state(cfg, grid, eps)?;
    let out = run(&initial, cfg.t_end, &cfg.step, &cfg.monitor);
    let member = RunConfig { grid, eps, ..cfg.clone() };
    let summary = write_run_dir(dir, &member, &initial, &out)?;
    Ok((initial, out, summary))
}

fn eps_values(cfg: &RunConfig, grid: &GridSpec) -> Vec<f64> {
    match &cfg.eps_choice {
        EpsChoice::List(l) => l.clone(),
        EpsChoice::Factors(f) => {
            let star = epsilon_threshold(grid);
            f.iter().map(|k| k * star).collect()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub spin: [u8; 2],
    pub eps: f64,
    pub eps_star: f64,
    pub xi_min: f64,
    /// `ε|ξ_min|² - |ξ_min|`: decay rate of the slow branch at `ξ_min`.
    pub predicted_rate: f64,
    /// `ln(‖ψ₀‖/‖ψ_T‖)/T` from the first and last records.
    pub measured_rate: f64,
    pub growth_factor: f64,
    pub monotone_decay: bool,
    pub flag: String,
    pub termination: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpsilonRow {
    pub eps: f64,
    pub eps_star: f64,
    pub f0: f64,
    pub delta1: f64,
    pub delta5: f64,
    pub bound: f64,
    pub psi_l4_final: f64,
    pub event_count: usize,
    pub termination: String,
}

fn psi_norms(out: &RunOutcome) -> Vec<f64> {
    out.records.iter().map(|r| r.energy.psi_l2.sqrt()).collect()
}

pub fn decoupled_sweep(cfg: &RunConfig, dir: &Path) -> Result<(Vec<SweepRow>, i32)> {
    let mut rows = vec![];
    let mut code = EXIT_CLEAN;
    for spin in &cfg.spins {
        let grid = cfg.grid.with_spin(*spin);
        let modes = ModeSet::for_grid(&grid);
        let star = epsilon_threshold(&grid);
        for (k, eps) in eps_values(cfg, &grid).into_iter().enumerate() {
            let sub = dir.join(format!("spin{}{}_eps{k}", spin.delta1, spin.delta2));
            let (_, out, summary) = single_run(cfg, grid, eps, &sub)?;
            code = code.max(summary.exit_code());
            let n = psi_norms(&out);
            let (first, last) = (n[0], *n.last().unwrap());
            let t = out.state.t;
            let growth = if first > 0.0 { last / first } else { 1.0 };
            let monotone = n.windows(2).all(|w| w[1] <= w[0]);
            let flag = if growth > 1.0 {
                "growth"
            } else if monotone && growth < 1.0 {
                "decay"
            } else {
                "neutral"
            };
            let xi = modes.min_nonzero;
            rows.push(SweepRow {
                spin: [spin.delta1, spin.delta2],
                eps,
                eps_star: star,
                xi_min: xi,
                predicted_rate: eps * xi * xi - xi,
                measured_rate: if first > 0.0 && last > 0.0 && t > 0.0 { (first / last).ln() / t } else { 0.0 },
                growth_factor: growth,
                monotone_decay: monotone,
                flag: flag.into(),
                termination: summary.termination,
            });
        }
    }
    let mut csv = String::from(
        "spin,eps,eps_star,xi_min,predicted_rate,measured_rate,growth_factor,monotone_decay,flag,termination\n",
    );
    for r in &rows {
        writeln!(
            csv,
            "{}{},{},{},{},{},{},{},{},{},{}",
            r.spin[0],
            r.spin[1],
            num(r.eps),
            num(r.eps_star),
            num(r.xi_min),
            num(r.predicted_rate),
            num(r.measured_rate),
            num(r.growth_factor),
            r.monotone_decay,
            r.flag,
            r.termination
        )
        .unwrap();
    }
    fs::write(dir.join("sweep.csv"), csv)?;
    Ok((rows, code))
}

pub fn epsilon_sweep(cfg: &RunConfig, dir: &Path) -> Result<(Vec<EpsilonRow>, i32)> {
    let grid = cfg.grid;
    let star = epsilon_threshold(&grid);
    let mut rows = vec![];
    let mut inputs = vec![];
    let mut code = EXIT_CLEAN;
    let eps_list = eps_values(cfg, &grid);
    for (k, eps) in eps_list.iter().enumerate() {
        let (initial, out, summary) = single_run(cfg, grid, *eps, &dir.join(format!("eps{k}")))?;
        code = code.max(summary.exit_code());
        let e = initial.energy();
        inputs.push(BudgetInput { eps: *eps, f0: e.f_global, delta1: cfg.monitor.delta1, psi0_l2_sq: e.psi_l2 });
        rows.push((out.state.energy().psi_l4, out.events.len(), summary.termination));
    }
    let budget = epsilon_budget_report(&inputs)?;
    let rows: Vec<EpsilonRow> = budget
        .iter()
        .zip(rows)
        .map(|(b, (l4, n, term))| EpsilonRow {
            eps: b.eps,
            eps_star: star,
            f0: b.f0,
            delta1: b.delta1,
            delta5: b.delta5,
            bound: b.bound,
            psi_l4_final: l4,
            event_count: n,
            termination: term,
        })
        .collect();
    let mut csv = String::from("eps,eps_star,f0,delta1,delta5,bound,psi_l4_final,event_count,termination\n");
    for r in &rows {
        writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{}",
            num(r.eps),
            num(r.eps_star),
            num(r.f0),
            num(r.delta1),
            num(r.delta5),
            num(r.bound),
            num(r.psi_l4_final),
            r.event_count,
            r.termination
        )
        .unwrap();
    }
    fs::write(dir.join("budget.csv"), csv)?;
    Ok((rows, code))
}

const ROUNDOFF: f64 = 1e-11;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IdentityRow {
    pub quantity: String,
    pub n: usize,
    pub value: f64,
    /// `log₂(value(n/2)/value(n))`; absent on the coarsest grid, for non-convergent
    /// quantities and when both values are at rounding level.
    pub order: Option<f64>,
}

/// Oracle quantities on one grid: `(name, value, refines)`.
fn identities_on(cfg: &RunConfig, grid: GridSpec) -> Result<Vec<(&'static str, f64, bool)>> {
    let s = initial_state(cfg, grid, cfg.eps)?;
    let mut out = vec![("bochner_phi_gap", bochner_residual_phi(&s.u).gap.abs(), true)];
    if !s.psi.is_zero() {
        out.push(("bochner_psi_gap", bochner_residual_psi(&s.psi, &s.u)?.gap.abs(), true));
    }
    let (eu, epsi) = rhs(&s)?;
    let (iu, ipsi) = rhs_intrinsic(&s)?;
    let du = eu.sub(&iu);
    let dpsi = epsi.field.sub(&ipsi.field);
    out.push(("intrinsic_extrinsic_gap", (du.inner(&du) + dpsi.inner(&dpsi)).sqrt(), true));
    if s.u.target == (Target::Sphere { q: 3 }) {
        let geo = FlowState::new(0.0, cfg.eps, geodesic_map(grid), VectorSpinorField::zeros(grid, 3))?;
        out.push(("geodesic_rhs_norm", rhs(&geo)?.0.norm_l2(), true));
    }
    let q = s.u.q();
    let mut v = Field::zeros(grid, q, false);
    for k in 0..q {
        let c = random_scalar(grid, 2, cfg.seed.wrapping_add(100 + k as u64));
        for p in 0..grid.len() {
            v.at_mut(p)[k] = c.data[p];
        }
    }
    for p in 0..grid.len() {
        s.u.target.project_tangent(s.u.at(p), v.at_mut(p));
    }
    let w = random_spinor(&s.u, 2, 1.0, cfg.seed.wrapping_add(200));
    let gc = gradient_check(&s, (&v, &w), &[4e-3, 2e-3, 1e-3])?;
    out.push(("gradient_relative_gap", gc.relative_gap(), true));
    let samples: Vec<_> = (0..4).map(|k| random_scalar(grid, 3, cfg.seed.wrapping_add(300 + k))).collect();
    let sob = sobolev_ratio(&samples, grid.injectivity_radius() / 4.0)?;
    out.push(("sobolev_max_ratio", sob.max_ratio, false));
    out.push(("sobolev_max_local_ratio", sob.max_local_ratio, false));
    let bump = random_scalar(grid, 2, cfg.seed.wrapping_add(400));
    let lo = bump.data.iter().cloned().fold(f64::INFINITY, f64::min);
    let u0 = Field { data: bump.data.iter().map(|x| x - lo).collect(), ..bump };
    let h = harnack_demo(&u0, 1.0, 1.0)?;
    out.push(("harnack_sup_over_bound", h.sup_at_t / h.bound, false));
    Ok(out)
}

pub fn identities_table(cfg: &RunConfig) -> Result<Vec<IdentityRow>> {
    let mut rows: Vec<IdentityRow> = vec![];
    for &n in &cfg.sizes {
        let grid = GridSpec::new(cfg.grid.lx, cfg.grid.ly, n, n, cfg.grid.spin)?;
        for (name, value, refines) in identities_on(cfg, grid)? {
            let prev = rows.iter().rev().find(|r| r.quantity == name).map(|r| r.value);
            let order = match prev {
                Some(p) if refines && p.min(value) > 0.0 && p.max(value) > ROUNDOFF => Some((p / value).log2()),
                _ => None,
            };
            rows.push(IdentityRow { quantity: name.into(), n, value, order });
        }
    }
    Ok(rows)
}

pub fn identities_csv(rows: &[IdentityRow]) -> String {
    let mut s = String::from("quantity,n,value,order\n");
    for r in rows {
        let order = r.order.map(num).unwrap_or_default();
        writeln!(s, "{},{},{},{}", r.quantity, r.n, num(r.value), order).unwrap();
    }
    s
}

#[derive(Clone, Debug)]
pub struct ExitReport {
    pub code: i32,
    pub out_dir: PathBuf,
    pub lines: Vec<String>,
}

/// Runs the configured preset below `out_dir`.
pub fn run_experiment(cfg: &RunConfig, out_dir: &Path) -> Result<ExitReport> {
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join("config.toml"), cfg.to_toml())?;
    fs::write(out_dir.join("conventions.txt"), conventions_stamp())?;
    let mut lines = vec![];
    let code = match cfg.preset {
        Preset::Degree1Blowup | Preset::Convergence => {
            let (_, out, s) = single_run(cfg, cfg.grid, cfg.eps, out_dir)?;
            lines.push(format!(
                "{}: t = {:.6} after {} steps, {} event(s), budget {}",
                s.termination,
                s.t_final,
                s.steps,
                s.event_count,
                s.singularity_budget.map_or("-".into(), |b| b.to_string())
            ));
            if let Termination::Failed(m) = &out.termination {
                lines.push(format!("error: {m}"));
            }
            s.exit_code()
        }
        Preset::DecoupledSweep => {
            let (rows, code) = decoupled_sweep(cfg, out_dir)?;
            for r in rows {
                lines.push(format!(
                    "spin ({},{}) eps {:.4} (eps* {:.4}): {} x{:.4e}, rate {:.5} (predicted {:.5})",
                    r.spin[0], r.spin[1], r.eps, r.eps_star, r.flag, r.growth_factor, r.measured_rate, r.predicted_rate
                ));
            }
            code
        }
        Preset::EpsilonSweep => {
            let (rows, code) = epsilon_sweep(cfg, out_dir)?;
            for r in rows {
                lines.push(format!(
                    "eps {:.5}: budget bound {:.4}, delta5 {:.4}, int |psi|^4 at end {:.4e}",
                    r.eps, r.bound, r.delta5, r.psi_l4_final
                ));
            }
            code
        }
        Preset::Identities => {
            let rows = identities_table(cfg)?;
            fs::write(out_dir.join("identities.csv"), identities_csv(&rows))?;
            for r in &rows {
                lines.push(format!(
                    "{:<26} n={:<4} {:.6e} {}",
                    r.quantity,
                    r.n,
                    r.value,
                    r.order.map_or(String::new(), |o| format!("order {o:.3}"))
                ));
            }
            EXIT_CLEAN
        }
    };
    Ok(ExitReport { code, out_dir: out_dir.to_path_buf(), lines })
}
